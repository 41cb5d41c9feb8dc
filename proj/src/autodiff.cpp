#include "mvanet/autodiff.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>
#include <utility>

namespace mvanet::ad {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<RowMat>;
using CMapRM = Eigen::Map<const RowMat>;
using DynStride = Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic>;
using SMapRM = Eigen::Map<RowMat, 0, DynStride>;
using CSMapRM = Eigen::Map<const RowMat, 0, DynStride>;
using VecMap = Eigen::Map<Eigen::VectorXd>;
using CVecMap = Eigen::Map<const Eigen::VectorXd>;

Var make(Tensor value, std::vector<Var> parents, std::function<void(Node&)> bp) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->parents = std::move(parents);
    for (const auto& p : n->parents)
        if (p && p->requires_grad) { n->requires_grad = true; break; }
    if (n->requires_grad) n->backprop = std::move(bp);
    return n;
}

void check_same(const Var& a, const Var& b, const char* op) {
    if (!a->value.same_shape(b->value))
        throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                    a->value.shape_str() + " vs " + b->value.shape_str());
}

// Generic elementwise op; df(x, y) is the local derivative dy/dx.
template <class F, class DF>
Var unary(const Var& a, F f, DF df) {
    Tensor out(a->value.shape());
    const Index n = out.numel();
    for (Index i = 0; i < n; ++i) out[i] = f(a->value[i]);
    return make(std::move(out), {a}, [df](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        Tensor& g = p.ensure_grad();
        const Index n = g.numel();
        for (Index i = 0; i < n; ++i) g[i] += self.grad[i] * df(p.value[i], self.value[i]);
    });
}

} // namespace

Var leaf(Tensor value, bool requires_grad, std::string name) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    n->name = std::move(name);
    return n;
}

Var constant(Tensor value) { return leaf(std::move(value), false); }

void backward(const Var& root) {
    if (!root) throw std::invalid_argument("backward: null var");
    root->ensure_grad().fill(1.0);
    if (!root->requires_grad) return;

    // Post-order DFS over the grad-requiring subgraph; reversed it yields a
    // topological order with the root first.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.push_back({root.get(), 0});
    seen.insert(root.get());
    while (!stack.empty()) {
        auto& [n, i] = stack.back();
        if (i < n->parents.size()) {
            Node* p = n->parents[i++].get();
            if (p && p->requires_grad && !seen.count(p)) {
                seen.insert(p);
                stack.push_back({p, 0});
            }
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backprop && n->has_grad) n->backprop(*n);
    }
}

void zero_grad(const std::vector<Var>& leaves) {
    for (const auto& v : leaves)
        if (v && v->has_grad) v->grad.fill(0.0);
}

//============================== elementwise ==================================

Var add(const Var& a, const Var& b) {
    check_same(a, b, "add");
    Tensor out(a->value.shape());
    const Index n = out.numel();
    for (Index i = 0; i < n; ++i) out[i] = a->value[i] + b->value[i];
    return make(std::move(out), {a, b}, [](Node& self) {
        for (int k = 0; k < 2; ++k) {
            Node& p = *self.parents[k];
            if (!p.requires_grad) continue;
            Tensor& g = p.ensure_grad();
            for (Index i = 0; i < g.numel(); ++i) g[i] += self.grad[i];
        }
    });
}

Var sub(const Var& a, const Var& b) {
    check_same(a, b, "sub");
    Tensor out(a->value.shape());
    for (Index i = 0; i < out.numel(); ++i) out[i] = a->value[i] - b->value[i];
    return make(std::move(out), {a, b}, [](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        if (pa.requires_grad) {
            Tensor& g = pa.ensure_grad();
            for (Index i = 0; i < g.numel(); ++i) g[i] += self.grad[i];
        }
        if (pb.requires_grad) {
            Tensor& g = pb.ensure_grad();
            for (Index i = 0; i < g.numel(); ++i) g[i] -= self.grad[i];
        }
    });
}

Var mul(const Var& a, const Var& b) {
    check_same(a, b, "mul");
    Tensor out(a->value.shape());
    for (Index i = 0; i < out.numel(); ++i) out[i] = a->value[i] * b->value[i];
    return make(std::move(out), {a, b}, [](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        if (pa.requires_grad) {
            Tensor& g = pa.ensure_grad();
            for (Index i = 0; i < g.numel(); ++i) g[i] += self.grad[i] * pb.value[i];
        }
        if (pb.requires_grad) {
            Tensor& g = pb.ensure_grad();
            for (Index i = 0; i < g.numel(); ++i) g[i] += self.grad[i] * pa.value[i];
        }
    });
}

Var divide(const Var& a, const Var& b) {
    check_same(a, b, "divide");
    Tensor out(a->value.shape());
    for (Index i = 0; i < out.numel(); ++i) out[i] = a->value[i] / b->value[i];
    return make(std::move(out), {a, b}, [](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        if (pa.requires_grad) {
            Tensor& g = pa.ensure_grad();
            for (Index i = 0; i < g.numel(); ++i) g[i] += self.grad[i] / pb.value[i];
        }
        if (pb.requires_grad) {
            Tensor& g = pb.ensure_grad();
            for (Index i = 0; i < g.numel(); ++i)
                g[i] -= self.grad[i] * pa.value[i] / (pb.value[i] * pb.value[i]);
        }
    });
}

Var scale(const Var& a, double s) {
    Tensor out(a->value.shape());
    for (Index i = 0; i < out.numel(); ++i) out[i] = a->value[i] * s;
    return make(std::move(out), {a}, [s](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        Tensor& g = p.ensure_grad();
        for (Index i = 0; i < g.numel(); ++i) g[i] += self.grad[i] * s;
    });
}

Var add_scalar(const Var& a, double s) {
    return unary(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Var relu(const Var& a) {
    return unary(a, [](double x) { return x > 0.0 ? x : 0.0; },
                 [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var gelu(const Var& a) {
    constexpr double inv_sqrt2 = 0.7071067811865475244;
    constexpr double inv_sqrt2pi = 0.3989422804014326779;
    return unary(a,
                 [=](double x) { return 0.5 * x * (1.0 + std::erf(x * inv_sqrt2)); },
                 [=](double x, double) {
                     return 0.5 * (1.0 + std::erf(x * inv_sqrt2)) +
                            x * inv_sqrt2pi * std::exp(-0.5 * x * x);
                 });
}

Var sigmoid(const Var& a) {
    return unary(a,
                 [](double x) {
                     return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                                     : std::exp(x) / (1.0 + std::exp(x));
                 },
                 [](double, double y) { return y * (1.0 - y); });
}

Var clamp(const Var& a, double lo, double hi) {
    return unary(a, [=](double x) { return std::min(std::max(x, lo), hi); },
                 [=](double x, double) { return (x > lo && x < hi) ? 1.0 : 0.0; });
}

Var square(const Var& a) {
    return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var add_const(const Var& a, const Tensor& c) {
    const auto& sa = a->value.shape();
    const auto& sc = c.shape();
    bool broadcast0 = false;
    if (sa == sc) {
        broadcast0 = false;
    } else if (sc.size() == sa.size() && sc[0] == 1 &&
               std::equal(sc.begin() + 1, sc.end(), sa.begin() + 1)) {
        broadcast0 = true;
    } else {
        throw std::invalid_argument("add_const: shape mismatch " + a->value.shape_str() +
                                    " vs " + c.shape_str());
    }
    Tensor out(a->value.shape());
    const Index block = c.numel();
    for (Index i = 0; i < out.numel(); ++i)
        out[i] = a->value[i] + c[broadcast0 ? i % block : i];
    return make(std::move(out), {a}, [](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        Tensor& g = p.ensure_grad();
        for (Index i = 0; i < g.numel(); ++i) g[i] += self.grad[i];
    });
}

Var mul_gate(const Var& x, const Var& gate) {
    const auto& sx = x->value.shape();
    const auto& sg = gate->value.shape();
    if (sx.size() != 4 || sg.size() != 4 || sg[1] != 1 || sg[0] != sx[0] ||
        sg[2] != sx[2] || sg[3] != sx[3])
        throw std::invalid_argument("mul_gate: want (B,C,H,W) x (B,1,H,W), got " +
                                    x->value.shape_str() + " x " + gate->value.shape_str());
    const Index B = sx[0], C = sx[1], HW = sx[2] * sx[3];
    Tensor out(sx);
    for (Index b = 0; b < B; ++b)
        for (Index c = 0; c < C; ++c) {
            const double* xv = x->value.data() + (b * C + c) * HW;
            const double* gv = gate->value.data() + b * HW;
            double* ov = out.data() + (b * C + c) * HW;
            for (Index i = 0; i < HW; ++i) ov[i] = xv[i] * gv[i];
        }
    return make(std::move(out), {x, gate}, [B, C, HW](Node& self) {
        Node& px = *self.parents[0];
        Node& pg = *self.parents[1];
        if (px.requires_grad) {
            Tensor& g = px.ensure_grad();
            for (Index b = 0; b < B; ++b)
                for (Index c = 0; c < C; ++c) {
                    double* d = g.data() + (b * C + c) * HW;
                    const double* up = self.grad.data() + (b * C + c) * HW;
                    const double* gv = pg.value.data() + b * HW;
                    for (Index i = 0; i < HW; ++i) d[i] += up[i] * gv[i];
                }
        }
        if (pg.requires_grad) {
            Tensor& g = pg.ensure_grad();
            for (Index b = 0; b < B; ++b)
                for (Index c = 0; c < C; ++c) {
                    double* d = g.data() + b * HW;
                    const double* up = self.grad.data() + (b * C + c) * HW;
                    const double* xv = px.value.data() + (b * C + c) * HW;
                    for (Index i = 0; i < HW; ++i) d[i] += up[i] * xv[i];
                }
        }
    });
}

//============================== reductions ===================================

Var sum(const Var& a) {
    double total = 0.0;
    for (Index i = 0; i < a->value.numel(); ++i) total += a->value[i];
    return make(Tensor::scalar(total), {a}, [](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        Tensor& g = p.ensure_grad();
        const double up = self.grad[0];
        for (Index i = 0; i < g.numel(); ++i) g[i] += up;
    });
}

Var mean(const Var& a) {
    const double inv = 1.0 / static_cast<double>(a->value.numel());
    double total = 0.0;
    for (Index i = 0; i < a->value.numel(); ++i) total += a->value[i];
    return make(Tensor::scalar(total * inv), {a}, [inv](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        Tensor& g = p.ensure_grad();
        const double up = self.grad[0] * inv;
        for (Index i = 0; i < g.numel(); ++i) g[i] += up;
    });
}

//============================== linear =======================================

Var linear(const Var& x, const Var& W, const Var& b) {
    if (W->value.rank() != 2)
        throw std::invalid_argument("linear: weight must be rank 2, got " + W->value.shape_str());
    const Index Cin = W->value.dim(0), Cout = W->value.dim(1);
    const auto& sx = x->value.shape();
    if (sx.empty() || sx.back() != Cin)
        throw std::invalid_argument("linear: input last dim " + x->value.shape_str() +
                                    " does not match weight " + W->value.shape_str());
    if (b && b->value.numel() != Cout)
        throw std::invalid_argument("linear: bias size mismatch");
    const Index R = x->value.numel() / Cin;

    std::vector<Index> so(sx);
    so.back() = Cout;
    Tensor out(so);
    {
        CMapRM X(x->value.data(), R, Cin);
        CMapRM Wm(W->value.data(), Cin, Cout);
        MapRM O(out.data(), R, Cout);
        O.noalias() = X * Wm;
        if (b) O.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(b->value.data(), Cout);
    }
    std::vector<Var> parents = {x, W};
    if (b) parents.push_back(b);
    const bool has_bias = static_cast<bool>(b);
    return make(std::move(out), std::move(parents), [R, Cin, Cout, has_bias](Node& self) {
        Node& px = *self.parents[0];
        Node& pw = *self.parents[1];
        CMapRM G(self.grad.data(), R, Cout);
        CMapRM X(px.value.data(), R, Cin);
        CMapRM Wm(pw.value.data(), Cin, Cout);
        if (px.requires_grad) {
            MapRM dX(px.ensure_grad().data(), R, Cin);
            dX.noalias() += G * Wm.transpose();
        }
        if (pw.requires_grad) {
            MapRM dW(pw.ensure_grad().data(), Cin, Cout);
            dW.noalias() += X.transpose() * G;
        }
        if (has_bias) {
            Node& pb = *self.parents[2];
            if (pb.requires_grad) {
                VecMap db(pb.ensure_grad().data(), Cout);
                db.noalias() += G.colwise().sum().transpose();
            }
        }
    });
}

//============================== attention ====================================

Var attention_scores(const Var& q, const Var& k, int heads) {
    const auto& sq = q->value.shape();
    const auto& sk = k->value.shape();
    if (sq.size() != 3 || sk.size() != 3 || sq[1] != sk[1] || sq[2] != sk[2])
        throw std::invalid_argument("attention_scores: want (Nq,B,C)/(Nk,B,C), got " +
                                    q->value.shape_str() + " and " + k->value.shape_str());
    const Index Nq = sq[0], B = sq[1], C = sq[2], Nk = sk[0];
    if (heads <= 0 || C % heads != 0)
        throw std::invalid_argument("attention_scores: channels not divisible by heads");
    const Index Dh = C / heads;
    const double sc = 1.0 / std::sqrt(static_cast<double>(Dh));

    Tensor out({B * heads, Nq, Nk});
    for (Index b = 0; b < B; ++b)
        for (Index h = 0; h < heads; ++h) {
            CSMapRM Q(q->value.data() + b * C + h * Dh, Nq, Dh, DynStride(B * C, 1));
            CSMapRM K(k->value.data() + b * C + h * Dh, Nk, Dh, DynStride(B * C, 1));
            MapRM S(out.data() + (b * heads + h) * Nq * Nk, Nq, Nk);
            S.noalias() = sc * (Q * K.transpose());
        }
    return make(std::move(out), {q, k}, [Nq, Nk, B, C, Dh, heads, sc](Node& self) {
        Node& pq = *self.parents[0];
        Node& pk = *self.parents[1];
        Tensor* qg = pq.requires_grad ? &pq.ensure_grad() : nullptr;
        Tensor* kg = pk.requires_grad ? &pk.ensure_grad() : nullptr;
        for (Index b = 0; b < B; ++b)
            for (Index h = 0; h < heads; ++h) {
                CMapRM G(self.grad.data() + (b * heads + h) * Nq * Nk, Nq, Nk);
                CSMapRM Q(pq.value.data() + b * C + h * Dh, Nq, Dh, DynStride(B * C, 1));
                CSMapRM K(pk.value.data() + b * C + h * Dh, Nk, Dh, DynStride(B * C, 1));
                if (qg) {
                    SMapRM dQ(qg->data() + b * C + h * Dh, Nq, Dh, DynStride(B * C, 1));
                    dQ.noalias() += sc * (G * K);
                }
                if (kg) {
                    SMapRM dK(kg->data() + b * C + h * Dh, Nk, Dh, DynStride(B * C, 1));
                    dK.noalias() += sc * (G.transpose() * Q);
                }
            }
    });
}

Var softmax_rows(const Var& s) {
    const auto& ss = s->value.shape();
    if (ss.empty()) throw std::invalid_argument("softmax_rows: rank 0");
    const Index L = ss.back();
    const Index R = s->value.numel() / L;
    Tensor out(ss);
    for (Index r = 0; r < R; ++r) {
        const double* in = s->value.data() + r * L;
        double* o = out.data() + r * L;
        double mx = in[0];
        for (Index j = 1; j < L; ++j) mx = std::max(mx, in[j]);
        double z = 0.0;
        for (Index j = 0; j < L; ++j) { o[j] = std::exp(in[j] - mx); z += o[j]; }
        for (Index j = 0; j < L; ++j) o[j] /= z;
    }
    return make(std::move(out), {s}, [R, L](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        Tensor& g = p.ensure_grad();
        for (Index r = 0; r < R; ++r) {
            const double* pv = self.value.data() + r * L;
            const double* up = self.grad.data() + r * L;
            double dot = 0.0;
            for (Index j = 0; j < L; ++j) dot += up[j] * pv[j];
            double* d = g.data() + r * L;
            for (Index j = 0; j < L; ++j) d[j] += pv[j] * (up[j] - dot);
        }
    });
}

Var attention_apply(const Var& p, const Var& v, int heads) {
    const auto& sp = p->value.shape();
    const auto& sv = v->value.shape();
    if (sp.size() != 3 || sv.size() != 3)
        throw std::invalid_argument("attention_apply: want (B*heads,Nq,Nk) and (Nk,B,C)");
    const Index Nk = sv[0], B = sv[1], C = sv[2];
    if (heads <= 0 || C % heads != 0 || sp[0] != B * heads || sp[2] != Nk)
        throw std::invalid_argument("attention_apply: shape mismatch " + p->value.shape_str() +
                                    " vs " + v->value.shape_str());
    const Index Nq = sp[1], Dh = C / heads;

    Tensor out({Nq, B, C});
    for (Index b = 0; b < B; ++b)
        for (Index h = 0; h < heads; ++h) {
            CMapRM P(p->value.data() + (b * heads + h) * Nq * Nk, Nq, Nk);
            CSMapRM V(v->value.data() + b * C + h * Dh, Nk, Dh, DynStride(B * C, 1));
            SMapRM O(out.data() + b * C + h * Dh, Nq, Dh, DynStride(B * C, 1));
            O.noalias() = P * V;
        }
    return make(std::move(out), {p, v}, [Nq, Nk, B, C, Dh, heads](Node& self) {
        Node& pp = *self.parents[0];
        Node& pv = *self.parents[1];
        Tensor* pg = pp.requires_grad ? &pp.ensure_grad() : nullptr;
        Tensor* vg = pv.requires_grad ? &pv.ensure_grad() : nullptr;
        for (Index b = 0; b < B; ++b)
            for (Index h = 0; h < heads; ++h) {
                CSMapRM G(self.grad.data() + b * C + h * Dh, Nq, Dh, DynStride(B * C, 1));
                CMapRM P(pp.value.data() + (b * heads + h) * Nq * Nk, Nq, Nk);
                CSMapRM V(pv.value.data() + b * C + h * Dh, Nk, Dh, DynStride(B * C, 1));
                if (pg) {
                    MapRM dP(pg->data() + (b * heads + h) * Nq * Nk, Nq, Nk);
                    dP.noalias() += G * V.transpose();
                }
                if (vg) {
                    SMapRM dV(vg->data() + b * C + h * Dh, Nk, Dh, DynStride(B * C, 1));
                    dV.noalias() += P.transpose() * G;
                }
            }
    });
}

//============================== shape movement ===============================

Var concat(const std::vector<Var>& parts, int axis) {
    if (parts.empty()) throw std::invalid_argument("concat: no inputs");
    const auto& s0 = parts[0]->value.shape();
    const int rank = static_cast<int>(s0.size());
    if (axis < 0 || axis >= rank) throw std::invalid_argument("concat: bad axis");
    Index axis_total = 0;
    for (const auto& p : parts) {
        const auto& s = p->value.shape();
        if (static_cast<int>(s.size()) != rank)
            throw std::invalid_argument("concat: rank mismatch");
        for (int i = 0; i < rank; ++i)
            if (i != axis && s[i] != s0[i])
                throw std::invalid_argument("concat: dim mismatch at axis " + std::to_string(i));
        axis_total += s[axis];
    }
    std::vector<Index> so(s0);
    so[axis] = axis_total;
    Tensor out(so);

    Index outer = 1, tail = 1;
    for (int i = 0; i < axis; ++i) outer *= s0[i];
    for (int i = axis + 1; i < rank; ++i) tail *= s0[i];

    std::vector<Index> blocks;   // per-part contiguous block length at fixed outer index
    blocks.reserve(parts.size());
    for (const auto& p : parts) blocks.push_back(p->value.dim(axis) * tail);
    const Index out_block = axis_total * tail;

    for (Index o = 0; o < outer; ++o) {
        double* dst = out.data() + o * out_block;
        for (std::size_t k = 0; k < parts.size(); ++k) {
            const double* src = parts[k]->value.data() + o * blocks[k];
            std::copy(src, src + blocks[k], dst);
            dst += blocks[k];
        }
    }
    return make(std::move(out), parts, [outer, out_block, blocks](Node& self) {
        for (Index o = 0; o < outer; ++o) {
            const double* src = self.grad.data() + o * out_block;
            for (std::size_t k = 0; k < self.parents.size(); ++k) {
                Node& p = *self.parents[k];
                if (p.requires_grad) {
                    double* dst = p.ensure_grad().data() + o * blocks[k];
                    for (Index i = 0; i < blocks[k]; ++i) dst[i] += src[i];
                }
                src += blocks[k];
            }
        }
    });
}

Var slice(const Var& x, int axis, Index start, Index len) {
    const auto& s = x->value.shape();
    const int rank = static_cast<int>(s.size());
    if (axis < 0 || axis >= rank) throw std::invalid_argument("slice: bad axis");
    if (start < 0 || len <= 0 || start + len > s[axis])
        throw std::invalid_argument("slice: range [" + std::to_string(start) + "," +
                                    std::to_string(start + len) + ") out of bounds for " +
                                    x->value.shape_str());
    Index outer = 1, tail = 1;
    for (int i = 0; i < axis; ++i) outer *= s[i];
    for (int i = axis + 1; i < rank; ++i) tail *= s[i];

    std::vector<Index> so(s);
    so[axis] = len;
    Tensor out(so);
    const Index in_block = s[axis] * tail, out_block = len * tail, off = start * tail;
    for (Index o = 0; o < outer; ++o) {
        const double* src = x->value.data() + o * in_block + off;
        std::copy(src, src + out_block, out.data() + o * out_block);
    }
    return make(std::move(out), {x}, [outer, in_block, out_block, off](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        Tensor& g = p.ensure_grad();
        for (Index o = 0; o < outer; ++o) {
            double* dst = g.data() + o * in_block + off;
            const double* src = self.grad.data() + o * out_block;
            for (Index i = 0; i < out_block; ++i) dst[i] += src[i];
        }
    });
}

Var tokenize(const Var& x) {
    const auto& s = x->value.shape();
    if (s.size() != 4) throw std::invalid_argument("tokenize: want (B,C,H,W)");
    const Index B = s[0], C = s[1], H = s[2], W = s[3];
    Tensor out({H * W, B, C});
    for (Index b = 0; b < B; ++b)
        for (Index c = 0; c < C; ++c) {
            const double* src = x->value.data() + (b * C + c) * H * W;
            for (Index i = 0; i < H * W; ++i) out.at3(i, b, c) = src[i];
        }
    return make(std::move(out), {x}, [B, C, H, W](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        Tensor& g = p.ensure_grad();
        for (Index b = 0; b < B; ++b)
            for (Index c = 0; c < C; ++c) {
                double* dst = g.data() + (b * C + c) * H * W;
                for (Index i = 0; i < H * W; ++i) dst[i] += self.grad.at3(i, b, c);
            }
    });
}

Var untokenize(const Var& x, Index H, Index W) {
    const auto& s = x->value.shape();
    if (s.size() != 3 || s[0] != H * W)
        throw std::invalid_argument("untokenize: token count " + x->value.shape_str() +
                                    " does not match " + std::to_string(H) + "x" + std::to_string(W));
    const Index B = s[1], C = s[2];
    Tensor out({B, C, H, W});
    for (Index b = 0; b < B; ++b)
        for (Index c = 0; c < C; ++c) {
            double* dst = out.data() + (b * C + c) * H * W;
            for (Index i = 0; i < H * W; ++i) dst[i] = x->value.at3(i, b, c);
        }
    return make(std::move(out), {x}, [B, C, H, W](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        Tensor& g = p.ensure_grad();
        for (Index b = 0; b < B; ++b)
            for (Index c = 0; c < C; ++c) {
                const double* src = self.grad.data() + (b * C + c) * H * W;
                for (Index i = 0; i < H * W; ++i) g.at3(i, b, c) += src[i];
            }
    });
}

Var reshape(const Var& x, std::vector<Index> shape) {
    Tensor out = x->value.reshaped(std::move(shape));
    return make(std::move(out), {x}, [](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        Tensor& g = p.ensure_grad();
        for (Index i = 0; i < g.numel(); ++i) g[i] += self.grad[i];
    });
}

//============================== convolution ==================================

namespace {

// col is (Cin*kh*kw) x (Ho*Wo), row-major.
void im2col(const Tensor& x, Index b, Index kh, Index kw, Index stride, Index pad,
            Index Ho, Index Wo, std::vector<double>& col) {
    const Index Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
    double* cp = col.data();
    for (Index ci = 0; ci < Cin; ++ci)
        for (Index ky = 0; ky < kh; ++ky)
            for (Index kx = 0; kx < kw; ++kx)
                for (Index oy = 0; oy < Ho; ++oy) {
                    const Index iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= H) {
                        for (Index ox = 0; ox < Wo; ++ox) *cp++ = 0.0;
                        continue;
                    }
                    const double* row = x.data() + ((b * Cin + ci) * H + iy) * W;
                    for (Index ox = 0; ox < Wo; ++ox) {
                        const Index ix = ox * stride - pad + kx;
                        *cp++ = (ix >= 0 && ix < W) ? row[ix] : 0.0;
                    }
                }
}

void col2im_add(Tensor& xg, Index b, Index kh, Index kw, Index stride, Index pad,
                Index Ho, Index Wo, const std::vector<double>& col) {
    const Index Cin = xg.dim(1), H = xg.dim(2), W = xg.dim(3);
    const double* cp = col.data();
    for (Index ci = 0; ci < Cin; ++ci)
        for (Index ky = 0; ky < kh; ++ky)
            for (Index kx = 0; kx < kw; ++kx)
                for (Index oy = 0; oy < Ho; ++oy) {
                    const Index iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= H) { cp += Wo; continue; }
                    double* row = xg.data() + ((b * Cin + ci) * H + iy) * W;
                    for (Index ox = 0; ox < Wo; ++ox) {
                        const Index ix = ox * stride - pad + kx;
                        if (ix >= 0 && ix < W) row[ix] += *cp;
                        ++cp;
                    }
                }
}

} // namespace

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
    const auto& sx = x->value.shape();
    const auto& sw = w->value.shape();
    if (sx.size() != 4 || sw.size() != 4)
        throw std::invalid_argument("conv2d: want (B,Cin,H,W) and (Cout,Cin,kh,kw)");
    if (sx[1] != sw[1])
        throw std::invalid_argument("conv2d: channel mismatch " + x->value.shape_str() +
                                    " vs " + w->value.shape_str());
    if (stride <= 0 || pad < 0) throw std::invalid_argument("conv2d: bad stride/pad");
    const Index B = sx[0], Cin = sx[1], H = sx[2], W = sx[3];
    const Index Cout = sw[0], kh = sw[2], kw = sw[3];
    if (b && b->value.numel() != Cout) throw std::invalid_argument("conv2d: bias size mismatch");
    const Index Ho = (H + 2 * pad - kh) / stride + 1;
    const Index Wo = (W + 2 * pad - kw) / stride + 1;
    if (Ho <= 0 || Wo <= 0) throw std::invalid_argument("conv2d: kernel larger than padded input");
    const Index K = Cin * kh * kw, S = Ho * Wo;

    Tensor out({B, Cout, Ho, Wo});
    {
        std::vector<double> col(static_cast<std::size_t>(K * S));
        CMapRM Wm(w->value.data(), Cout, K);
        for (Index bi = 0; bi < B; ++bi) {
            im2col(x->value, bi, kh, kw, stride, pad, Ho, Wo, col);
            CMapRM Col(col.data(), K, S);
            MapRM O(out.data() + bi * Cout * S, Cout, S);
            O.noalias() = Wm * Col;
            if (b) O.colwise() += CVecMap(b->value.data(), Cout);
        }
    }
    std::vector<Var> parents = {x, w};
    if (b) parents.push_back(b);
    const bool has_bias = static_cast<bool>(b);
    return make(std::move(out), std::move(parents),
                [B, Cin, H, W, Cout, kh, kw, K, S, Ho, Wo, stride, pad, has_bias](Node& self) {
        Node& px = *self.parents[0];
        Node& pw = *self.parents[1];
        Node* pb = has_bias ? self.parents[2].get() : nullptr;
        CMapRM Wm(pw.value.data(), Cout, K);
        std::vector<double> col(static_cast<std::size_t>(K * S));
        std::vector<double> dcol;
        if (px.requires_grad) dcol.resize(static_cast<std::size_t>(K * S));
        for (Index bi = 0; bi < B; ++bi) {
            CMapRM G(self.grad.data() + bi * Cout * S, Cout, S);
            if (pw.requires_grad || px.requires_grad)
                im2col(px.value, bi, kh, kw, stride, pad, Ho, Wo, col);
            if (pw.requires_grad) {
                MapRM dW(pw.ensure_grad().data(), Cout, K);
                CMapRM Col(col.data(), K, S);
                dW.noalias() += G * Col.transpose();
            }
            if (px.requires_grad) {
                MapRM dCol(dcol.data(), K, S);
                dCol.noalias() = Wm.transpose() * G;
                col2im_add(px.ensure_grad(), bi, kh, kw, stride, pad, Ho, Wo, dcol);
            }
            if (pb && pb->requires_grad) {
                VecMap db(pb->ensure_grad().data(), Cout);
                db.noalias() += G.rowwise().sum();
            }
        }
    });
}

//============================== pooling / resize =============================

Var avg_pool(const Var& x, int window) {
    const auto& s = x->value.shape();
    if (s.size() != 4) throw std::invalid_argument("avg_pool: want (B,C,H,W)");
    if (window <= 0) throw std::invalid_argument("avg_pool: bad window");
    const Index B = s[0], C = s[1], H = s[2], W = s[3], win = window;
    const Index Ho = (H + win - 1) / win, Wo = (W + win - 1) / win;

    Tensor out({B, C, Ho, Wo});
    for (Index b = 0; b < B; ++b)
        for (Index c = 0; c < C; ++c)
            for (Index oy = 0; oy < Ho; ++oy) {
                const Index y0 = oy * win, y1 = std::min(y0 + win, H);
                for (Index ox = 0; ox < Wo; ++ox) {
                    const Index x0 = ox * win, x1 = std::min(x0 + win, W);
                    double acc = 0.0;
                    for (Index y = y0; y < y1; ++y)
                        for (Index xx = x0; xx < x1; ++xx) acc += x->value.at4(b, c, y, xx);
                    out.at4(b, c, oy, ox) = acc / static_cast<double>((y1 - y0) * (x1 - x0));
                }
            }
    return make(std::move(out), {x}, [B, C, H, W, win, Ho, Wo](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        Tensor& g = p.ensure_grad();
        for (Index b = 0; b < B; ++b)
            for (Index c = 0; c < C; ++c)
                for (Index oy = 0; oy < Ho; ++oy) {
                    const Index y0 = oy * win, y1 = std::min(y0 + win, H);
                    for (Index ox = 0; ox < Wo; ++ox) {
                        const Index x0 = ox * win, x1 = std::min(x0 + win, W);
                        const double up = self.grad.at4(b, c, oy, ox) /
                                          static_cast<double>((y1 - y0) * (x1 - x0));
                        for (Index y = y0; y < y1; ++y)
                            for (Index xx = x0; xx < x1; ++xx) g.at4(b, c, y, xx) += up;
                    }
                }
    });
}

namespace {

struct Tap { Index i0, i1; double f; };

// Half-pixel source coordinate with edge clamping.
inline Tap bilinear_tap(Index o, Index out_n, Index in_n) {
    const double scale = static_cast<double>(in_n) / static_cast<double>(out_n);
    double s = (static_cast<double>(o) + 0.5) * scale - 0.5;
    if (s < 0.0) s = 0.0;
    if (s > static_cast<double>(in_n - 1)) s = static_cast<double>(in_n - 1);
    const Index i0 = static_cast<Index>(std::floor(s));
    const Index i1 = std::min(i0 + 1, in_n - 1);
    return {i0, i1, s - static_cast<double>(i0)};
}

} // namespace

Var bilinear(const Var& x, Index out_h, Index out_w) {
    const auto& s = x->value.shape();
    if (s.size() != 4) throw std::invalid_argument("bilinear: want (B,C,H,W)");
    if (out_h <= 0 || out_w <= 0) throw std::invalid_argument("bilinear: bad output size");
    const Index B = s[0], C = s[1], H = s[2], W = s[3];

    std::vector<Tap> ty(static_cast<std::size_t>(out_h)), tx(static_cast<std::size_t>(out_w));
    for (Index oy = 0; oy < out_h; ++oy) ty[static_cast<std::size_t>(oy)] = bilinear_tap(oy, out_h, H);
    for (Index ox = 0; ox < out_w; ++ox) tx[static_cast<std::size_t>(ox)] = bilinear_tap(ox, out_w, W);

    Tensor out({B, C, out_h, out_w});
    for (Index b = 0; b < B; ++b)
        for (Index c = 0; c < C; ++c)
            for (Index oy = 0; oy < out_h; ++oy) {
                const Tap& a = ty[static_cast<std::size_t>(oy)];
                for (Index ox = 0; ox < out_w; ++ox) {
                    const Tap& e = tx[static_cast<std::size_t>(ox)];
                    const double v00 = x->value.at4(b, c, a.i0, e.i0);
                    const double v01 = x->value.at4(b, c, a.i0, e.i1);
                    const double v10 = x->value.at4(b, c, a.i1, e.i0);
                    const double v11 = x->value.at4(b, c, a.i1, e.i1);
                    out.at4(b, c, oy, ox) = (1.0 - a.f) * ((1.0 - e.f) * v00 + e.f * v01) +
                                            a.f * ((1.0 - e.f) * v10 + e.f * v11);
                }
            }
    return make(std::move(out), {x}, [B, C, out_h, out_w, ty, tx](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        Tensor& g = p.ensure_grad();
        for (Index b = 0; b < B; ++b)
            for (Index c = 0; c < C; ++c)
                for (Index oy = 0; oy < out_h; ++oy) {
                    const Tap& a = ty[static_cast<std::size_t>(oy)];
                    for (Index ox = 0; ox < out_w; ++ox) {
                        const Tap& e = tx[static_cast<std::size_t>(ox)];
                        const double up = self.grad.at4(b, c, oy, ox);
                        g.at4(b, c, a.i0, e.i0) += up * (1.0 - a.f) * (1.0 - e.f);
                        g.at4(b, c, a.i0, e.i1) += up * (1.0 - a.f) * e.f;
                        g.at4(b, c, a.i1, e.i0) += up * a.f * (1.0 - e.f);
                        g.at4(b, c, a.i1, e.i1) += up * a.f * e.f;
                    }
                }
    });
}

//============================== normalization ================================

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
    const auto& s = x->value.shape();
    if (s.empty()) throw std::invalid_argument("layer_norm: rank 0");
    const Index C = s.back();
    if (gamma->value.numel() != C || beta->value.numel() != C)
        throw std::invalid_argument("layer_norm: affine size mismatch");
    const Index R = x->value.numel() / C;

    Tensor out(s);
    std::vector<double> rstd(static_cast<std::size_t>(R));
    for (Index r = 0; r < R; ++r) {
        const double* in = x->value.data() + r * C;
        double mu = 0.0;
        for (Index j = 0; j < C; ++j) mu += in[j];
        mu /= static_cast<double>(C);
        double var = 0.0;
        for (Index j = 0; j < C; ++j) { const double d = in[j] - mu; var += d * d; }
        var /= static_cast<double>(C);
        const double rs = 1.0 / std::sqrt(var + eps);
        rstd[static_cast<std::size_t>(r)] = rs;
        double* o = out.data() + r * C;
        for (Index j = 0; j < C; ++j)
            o[j] = (in[j] - mu) * rs * gamma->value[j] + beta->value[j];
    }
    return make(std::move(out), {x, gamma, beta}, [R, C, rstd](Node& self) {
        Node& px = *self.parents[0];
        Node& pg = *self.parents[1];
        Node& pb = *self.parents[2];
        Tensor* dgamma = pg.requires_grad ? &pg.ensure_grad() : nullptr;
        Tensor* dbeta = pb.requires_grad ? &pb.ensure_grad() : nullptr;
        Tensor* dx = px.requires_grad ? &px.ensure_grad() : nullptr;
        std::vector<double> xhat(static_cast<std::size_t>(C));
        for (Index r = 0; r < R; ++r) {
            const double* in = px.value.data() + r * C;
            const double* up = self.grad.data() + r * C;
            const double rs = rstd[static_cast<std::size_t>(r)];
            double mu = 0.0;
            for (Index j = 0; j < C; ++j) mu += in[j];
            mu /= static_cast<double>(C);
            double m1 = 0.0, m2 = 0.0;
            for (Index j = 0; j < C; ++j) {
                xhat[static_cast<std::size_t>(j)] = (in[j] - mu) * rs;
                const double dxh = up[j] * pg.value[j];
                m1 += dxh;
                m2 += dxh * xhat[static_cast<std::size_t>(j)];
            }
            m1 /= static_cast<double>(C);
            m2 /= static_cast<double>(C);
            if (dx) {
                double* d = dx->data() + r * C;
                for (Index j = 0; j < C; ++j) {
                    const double dxh = up[j] * pg.value[j];
                    d[j] += rs * (dxh - m1 - xhat[static_cast<std::size_t>(j)] * m2);
                }
            }
            if (dgamma)
                for (Index j = 0; j < C; ++j)
                    (*dgamma)[j] += up[j] * xhat[static_cast<std::size_t>(j)];
            if (dbeta)
                for (Index j = 0; j < C; ++j) (*dbeta)[j] += up[j];
        }
    });
}

Var batch_norm2d(const Var& x, const Var& gamma, const Var& beta,
                 Tensor* running_mean, Tensor* running_var,
                 bool training, double momentum, double eps) {
    const auto& s = x->value.shape();
    if (s.size() != 4) throw std::invalid_argument("batch_norm2d: want (B,C,H,W)");
    const Index B = s[0], C = s[1], HW = s[2] * s[3];
    if (gamma->value.numel() != C || beta->value.numel() != C)
        throw std::invalid_argument("batch_norm2d: affine size mismatch");
    const Index N = B * HW;

    std::vector<double> mu(static_cast<std::size_t>(C)), rs(static_cast<std::size_t>(C));
    if (training) {
        for (Index c = 0; c < C; ++c) {
            double m = 0.0;
            for (Index b = 0; b < B; ++b) {
                const double* v = x->value.data() + (b * C + c) * HW;
                for (Index i = 0; i < HW; ++i) m += v[i];
            }
            m /= static_cast<double>(N);
            double var = 0.0;
            for (Index b = 0; b < B; ++b) {
                const double* v = x->value.data() + (b * C + c) * HW;
                for (Index i = 0; i < HW; ++i) { const double d = v[i] - m; var += d * d; }
            }
            var /= static_cast<double>(N);
            mu[static_cast<std::size_t>(c)] = m;
            rs[static_cast<std::size_t>(c)] = 1.0 / std::sqrt(var + eps);
            if (running_mean && running_var) {
                (*running_mean)[c] = (1.0 - momentum) * (*running_mean)[c] + momentum * m;
                (*running_var)[c] = (1.0 - momentum) * (*running_var)[c] + momentum * var;
            }
        }
    } else {
        if (!running_mean || !running_var)
            throw std::invalid_argument("batch_norm2d: eval mode needs running stats");
        for (Index c = 0; c < C; ++c) {
            mu[static_cast<std::size_t>(c)] = (*running_mean)[c];
            rs[static_cast<std::size_t>(c)] = 1.0 / std::sqrt((*running_var)[c] + eps);
        }
    }

    Tensor out(s);
    for (Index b = 0; b < B; ++b)
        for (Index c = 0; c < C; ++c) {
            const double* v = x->value.data() + (b * C + c) * HW;
            double* o = out.data() + (b * C + c) * HW;
            const double m = mu[static_cast<std::size_t>(c)];
            const double r = rs[static_cast<std::size_t>(c)];
            const double gm = gamma->value[c], bt = beta->value[c];
            for (Index i = 0; i < HW; ++i) o[i] = (v[i] - m) * r * gm + bt;
        }
    return make(std::move(out), {x, gamma, beta},
                [B, C, HW, N, mu, rs, training](Node& self) {
        Node& px = *self.parents[0];
        Node& pg = *self.parents[1];
        Node& pb = *self.parents[2];
        Tensor* dx = px.requires_grad ? &px.ensure_grad() : nullptr;
        Tensor* dgamma = pg.requires_grad ? &pg.ensure_grad() : nullptr;
        Tensor* dbeta = pb.requires_grad ? &pb.ensure_grad() : nullptr;
        for (Index c = 0; c < C; ++c) {
            const double m = mu[static_cast<std::size_t>(c)];
            const double r = rs[static_cast<std::size_t>(c)];
            const double gm = pg.value[c];
            double sum_g = 0.0, sum_gx = 0.0;
            for (Index b = 0; b < B; ++b) {
                const double* up = self.grad.data() + (b * C + c) * HW;
                const double* v = px.value.data() + (b * C + c) * HW;
                for (Index i = 0; i < HW; ++i) {
                    sum_g += up[i];
                    sum_gx += up[i] * (v[i] - m) * r;
                }
            }
            if (dgamma) (*dgamma)[c] += sum_gx;
            if (dbeta) (*dbeta)[c] += sum_g;
            if (!dx) continue;
            if (training) {
                const double inv_n = 1.0 / static_cast<double>(N);
                for (Index b = 0; b < B; ++b) {
                    const double* up = self.grad.data() + (b * C + c) * HW;
                    const double* v = px.value.data() + (b * C + c) * HW;
                    double* d = dx->data() + (b * C + c) * HW;
                    for (Index i = 0; i < HW; ++i) {
                        const double xh = (v[i] - m) * r;
                        d[i] += gm * r * (up[i] - inv_n * sum_g - xh * inv_n * sum_gx);
                    }
                }
            } else {
                for (Index b = 0; b < B; ++b) {
                    const double* up = self.grad.data() + (b * C + c) * HW;
                    double* d = dx->data() + (b * C + c) * HW;
                    for (Index i = 0; i < HW; ++i) d[i] += up[i] * gm * r;
                }
            }
        }
    });
}

//============================== losses =======================================

Var bce_mean(const Var& pred, const Tensor& target) {
    if (!pred->value.same_shape(target))
        throw std::invalid_argument("bce_mean: shape mismatch " + pred->value.shape_str() +
                                    " vs " + target.shape_str());
    constexpr double lo = 1e-7, hi = 1.0 - 1e-7;
    const Index n = target.numel();
    double total = 0.0;
    for (Index i = 0; i < n; ++i) {
        const double p = std::min(std::max(pred->value[i], lo), hi);
        const double t = target[i];
        total -= t * std::log(p) + (1.0 - t) * std::log(1.0 - p);
    }
    return make(Tensor::scalar(total / static_cast<double>(n)), {pred},
                [target, n](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        Tensor& g = p.ensure_grad();
        const double up = self.grad[0] / static_cast<double>(n);
        for (Index i = 0; i < n; ++i) {
            const double v = p.value[i];
            if (v <= lo || v >= hi) continue;
            g[i] += up * (v - target[i]) / (v * (1.0 - v));
        }
    });
}

Var weighted_iou(const Var& pred, const Tensor& target, const Tensor& weights) {
    if (!pred->value.same_shape(target) || !pred->value.same_shape(weights))
        throw std::invalid_argument("weighted_iou: shape mismatch");
    const Index n = target.numel();
    double inter = 0.0, uni = 0.0;
    for (Index i = 0; i < n; ++i) {
        const double p = pred->value[i], t = target[i], w = weights[i];
        inter += w * p * t;
        uni += w * (p + t - p * t);
    }
    const double A = inter + 1.0, Bd = uni + 1.0;
    return make(Tensor::scalar(1.0 - A / Bd), {pred}, [target, weights, n, A, Bd](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        Tensor& g = p.ensure_grad();
        const double up = self.grad[0];
        const double inv_b2 = 1.0 / (Bd * Bd);
        for (Index i = 0; i < n; ++i) {
            const double t = target[i], w = weights[i];
            g[i] += up * w * (A * (1.0 - t) - t * Bd) * inv_b2;
        }
    });
}

} // namespace mvanet::ad
