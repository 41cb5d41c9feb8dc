#ifndef MVANET_AUTODIFF_HPP
#define MVANET_AUTODIFF_HPP

/*
 * Reverse-mode automatic differentiation over mvanet::Tensor.
 *
 * Each op builds a Node holding the forward value and a closure that
 * scatters the node's cotangent into its parents. backward() runs the
 * closures in reverse topological order. Graphs are rebuilt per forward
 * pass; parameters are long-lived leaf nodes whose grads accumulate
 * until zeroed by the optimizer.
 *
 * Matrix products route through Eigen; everything else is plain loops.
 */

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "mvanet/tensor.hpp"

namespace mvanet::ad {

struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
    Tensor value;
    Tensor grad;                   // allocated on first accumulation
    bool requires_grad = false;
    bool has_grad = false;
    std::vector<Var> parents;
    std::function<void(Node&)> backprop;   // reads this node's grad
    std::string name;                      // set for parameters/leaves only

    Tensor& ensure_grad() {
        if (!has_grad) {
            grad = Tensor::zeros(value.shape());
            has_grad = true;
        }
        return grad;
    }
};

Var leaf(Tensor value, bool requires_grad = false, std::string name = "");
Var constant(Tensor value);

// Seeds root.grad with ones (root is normally a scalar) and propagates.
void backward(const Var& root);
void zero_grad(const std::vector<Var>& leaves);

// ---- elementwise -----------------------------------------------------------
Var add(const Var& a, const Var& b);             // same shape
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);             // Hadamard, same shape
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var divide(const Var& a, const Var& b);          // same shape, elementwise
Var relu(const Var& a);
Var gelu(const Var& a);
Var sigmoid(const Var& a);
Var clamp(const Var& a, double lo, double hi);   // zero gradient where clipped
Var square(const Var& a);

// Adds a broadcast constant: c has shape (1,C,H,W) against a (B,C,H,W),
// or exactly a's shape. Used for positional encodings.
Var add_const(const Var& a, const Tensor& c);

// Multiplies a (B,C,H,W) map by a one-channel (B,1,H,W) gate.
Var mul_gate(const Var& x, const Var& gate);

// ---- reductions ------------------------------------------------------------
Var sum(const Var& a);                           // -> scalar (shape {1})
Var mean(const Var& a);

// ---- linear algebra --------------------------------------------------------
// x viewed as (R, Cin) against W (Cin, Cout), optional bias (Cout).
// The leading axes of x are preserved; the last axis must equal Cin.
Var linear(const Var& x, const Var& W, const Var& b);

// ---- attention primitives (token layout: (N, B, C)) ------------------------
// Scaled scores:  out[(b*heads+h), i, j] = q_i . k_j / sqrt(C/heads) per head.
Var attention_scores(const Var& q, const Var& k, int heads);
Var softmax_rows(const Var& s);                  // softmax over last axis
// out (Nq,B,C):  out_i = sum_j P[g,i,j] * v_j per (batch, head) group g.
Var attention_apply(const Var& p, const Var& v, int heads);

// ---- shape movement --------------------------------------------------------
Var concat(const std::vector<Var>& parts, int axis);
Var slice(const Var& x, int axis, Index start, Index len);
Var tokenize(const Var& x);                      // (B,C,H,W) -> (H*W, B, C)
Var untokenize(const Var& x, Index H, Index W);  // inverse of tokenize
Var reshape(const Var& x, std::vector<Index> shape);

// ---- spatial ops -----------------------------------------------------------
Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad);
// Non-overlapping average pooling, kernel = stride = window. When window
// does not divide the input, cells are formed by ceiling division and the
// edge cells average only the pixels they actually cover.
Var avg_pool(const Var& x, int window);
Var bilinear(const Var& x, Index out_h, Index out_w);  // align_corners off
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps);
// Batch norm over (B,H,W) per channel. In training mode batch statistics are
// used and running buffers (if non-null) updated in place; in eval mode the
// running buffers are read.
Var batch_norm2d(const Var& x, const Var& gamma, const Var& beta,
                 Tensor* running_mean, Tensor* running_var,
                 bool training, double momentum, double eps);

// ---- losses ----------------------------------------------------------------
Var bce_mean(const Var& pred, const Tensor& target);   // pred in (0,1)
// 1 - (sum(w*p*g)+1)/(sum(w*(p+g-p*g))+1); the +1 guards empty targets.
Var weighted_iou(const Var& pred, const Tensor& target, const Tensor& weights);

} // namespace mvanet::ad

#endif
