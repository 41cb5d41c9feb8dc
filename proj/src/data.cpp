#include "mvanet/data.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "mvanet/errors.hpp"
#include "mvanet/image_io.hpp"

namespace fs = std::filesystem;

namespace mvanet {

namespace {

// splitmix64: portable deterministic stream, independent of the C++ library.
struct Rng {
    std::uint64_t state;
    explicit Rng(std::uint64_t seed) : state(seed) {}
    std::uint64_t next() {
        state += 0x9E3779B97F4A7C15ULL;
        std::uint64_t z = state;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }
    double real() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }  // [0,1)
    Index range(Index lo, Index hi) {  // inclusive; hi < lo collapses to lo
        if (hi <= lo) return lo;
        return lo + static_cast<Index>(next() % static_cast<std::uint64_t>(hi - lo + 1));
    }
};

struct Canvas {
    Index size;
    std::vector<double> mask;
    Canvas(Index s) : size(s), mask(s * s, 0.0) {}
    // Clamped to a 1-px clean border.
    void fill(Index y0, Index h, Index x0, Index w) {
        const Index ya = std::max<Index>(1, y0), yb = std::min(size - 1, y0 + h);
        const Index xa = std::max<Index>(1, x0), xb = std::min(size - 1, x0 + w);
        for (Index y = ya; y < yb; ++y)
            for (Index x = xa; x < xb; ++x) mask[y * size + x] = 1.0;
    }
};

// A value v in [lo,hi] with v = 1 (mod 4); collapses to the lowest slot when
// the range is empty.
Index pick_snapped(Rng& rng, Index lo, Index hi) {
    Index klo = (lo <= 1) ? 0 : (lo + 2) / 4;
    Index khi = (hi - 1) / 4;
    if (khi < klo) khi = klo;
    return 4 * rng.range(klo, khi) + 1;
}

void draw_grille(Rng& rng, Canvas& c, Index w) {
    const Index S = c.size;
    const Index x0 = pick_snapped(rng, 1, S / 2);
    const Index y0 = pick_snapped(rng, 1, S / 2);
    const Index rw = std::min<Index>(4 * rng.range(S / 16, S / 8), S - 2 - x0);
    const Index rh = std::min<Index>(4 * rng.range(S / 16, S / 8), S - 2 - y0);
    const Index pitch = 4 * rng.range(2, 4);
    const Index mode = rng.range(0, 2);  // bars: 0 vertical, 1 horizontal, 2 both
    if (mode != 1)
        for (Index x = x0; x + w <= x0 + rw; x += pitch) c.fill(y0, rh, x, w);
    if (mode != 0)
        for (Index y = y0; y + w <= y0 + rh; y += pitch) c.fill(y, w, x0, rw);
}

void draw_cross(Rng& rng, Canvas& c, Index w) {
    const Index S = c.size;
    const Index cx = pick_snapped(rng, S / 8, S - S / 8);
    const Index cy = pick_snapped(rng, S / 8, S - S / 8);
    const Index ax = 4 * rng.range(S / 32, S / 8);
    const Index ay = 4 * rng.range(S / 32, S / 8);
    c.fill(cy, w, cx - ax, 2 * ax + w);
    c.fill(cy - ay, 2 * ay + w, cx, w);
}

void draw_ring(Rng& rng, Canvas& c, Index w) {
    const Index S = c.size;
    const Index x0 = pick_snapped(rng, 1, S / 2);
    const Index y0 = pick_snapped(rng, 1, S / 2);
    Index sx = std::max<Index>(8, std::min<Index>(4 * rng.range(4, S / 8), S - 3 - w - x0));
    Index sy = std::max<Index>(8, std::min<Index>(4 * rng.range(4, S / 8), S - 3 - w - y0));
    sx -= sx % 4;  // keeps the far edges on the same alignment
    sy -= sy % 4;
    c.fill(y0, w, x0, sx + w);
    c.fill(y0 + sy, w, x0, sx + w);
    c.fill(y0, sy + w, x0, w);
    c.fill(y0, sy + w, x0 + sx, w);
}

} // namespace

std::vector<Sample> generate_synthetic(std::uint64_t seed, int count, Index size) {
    if (size <= 0 || size % 64 != 0)
        throw ConfigError("dataset size " + std::to_string(size) +
                          " must be a positive multiple of 64");
    if (count < 1) throw ConfigError("dataset count must be at least 1");

    static constexpr Index kWidthCycle[5] = {1, 1, 2, 2, 3};
    std::vector<Sample> out;
    out.reserve(count);
    for (int i = 0; i < count; ++i) {
        Rng rng(seed ^ (0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(i + 1)));
        const Index w = kWidthCycle[i % 5];
        Canvas canvas(size);
        const Index structures = rng.range(1, 3);
        for (Index s = 0; s < structures; ++s) {
            switch (rng.range(0, 2)) {
                case 0: draw_grille(rng, canvas, w); break;
                case 1: draw_cross(rng, canvas, w); break;
                default: draw_ring(rng, canvas, w); break;
            }
        }
        double fg_count = 0;
        for (double v : canvas.mask) fg_count += v;
        if (fg_count == 0) {  // clamping ate everything; guarantee non-empty
            const Index c = pick_snapped(rng, size / 4, 3 * size / 4);
            canvas.fill(c, w, size / 4, size / 2);
            canvas.fill(size / 4, size / 2, c, w);
        }

        Sample smp;
        char id[32];
        std::snprintf(id, sizeof id, "synth%04d", i);
        smp.id = id;
        smp.mask = Tensor({1, 1, size, size}, canvas.mask);
        smp.image = Tensor({1, 3, size, size});
        double fx[3], fy[3], px[3], py[3], fg[3];
        for (int c = 0; c < 3; ++c) {
            fx[c] = 1.0 + 3.0 * rng.real();
            fy[c] = 1.0 + 3.0 * rng.real();
            px[c] = rng.real();
            py[c] = rng.real();
            fg[c] = 0.86 + 0.10 * rng.real();
        }
        constexpr double kTau = 6.283185307179586;
        for (Index c = 0; c < 3; ++c)
            for (Index y = 0; y < size; ++y)
                for (Index x = 0; x < size; ++x) {
                    const double u = static_cast<double>(x) / static_cast<double>(size);
                    const double v = static_cast<double>(y) / static_cast<double>(size);
                    double bg = 0.30 + 0.10 * std::sin(kTau * (fx[c] * u + px[c])) *
                                           std::cos(kTau * (fy[c] * v + py[c]));
                    bg += 0.04 * (rng.real() - 0.5);
                    const double m = canvas.mask[y * size + x];
                    double val = bg * (1.0 - m) + fg[c] * m;
                    smp.image.at4(0, c, y, x) = std::min(1.0, std::max(0.0, val));
                }
        out.push_back(std::move(smp));
    }
    return out;
}

Sample hflip(const Sample& s) {
    Sample out{Tensor(s.image.shape()), Tensor(s.mask.shape()), s.id};
    const Index H = s.image.dim(2), W = s.image.dim(3);
    for (Index c = 0; c < 3; ++c)
        for (Index y = 0; y < H; ++y)
            for (Index x = 0; x < W; ++x)
                out.image.at4(0, c, y, x) = s.image.at4(0, c, y, W - 1 - x);
    for (Index y = 0; y < H; ++y)
        for (Index x = 0; x < W; ++x) out.mask.at4(0, 0, y, x) = s.mask.at4(0, 0, y, W - 1 - x);
    return out;
}

std::array<double, 2> apply_affine(const Affine& m, double x, double y) {
    return {m[0] * x + m[1] * y + m[2], m[3] * x + m[4] * y + m[5]};
}

namespace {

Affine compose(const Affine& m2, const Affine& m1) {  // m2 applied after m1
    return {m2[0] * m1[0] + m2[1] * m1[3], m2[0] * m1[1] + m2[1] * m1[4],
            m2[0] * m1[2] + m2[1] * m1[5] + m2[2],
            m2[3] * m1[0] + m2[4] * m1[3], m2[3] * m1[1] + m2[4] * m1[4],
            m2[3] * m1[2] + m2[4] * m1[5] + m2[5]};
}

} // namespace

AugmentResult augment(const Sample& s, std::uint64_t seed) {
    const Index H = s.image.dim(2), W = s.image.dim(3);
    Rng rng(seed);
    AugmentResult r;
    r.flipped = rng.real() < 0.5;

    Index cw = 0, ch = 0;
    do {
        r.crop_area = 0.75 + 0.25 * rng.real();
        const double side = std::sqrt(r.crop_area);
        cw = static_cast<Index>(std::floor(W * side + 0.5));
        ch = static_cast<Index>(std::floor(H * side + 0.5));
    } while (cw < 8 || ch < 8 || cw > W || ch > H);
    const Index x0 = rng.range(0, W - cw);
    const Index y0 = rng.range(0, H - ch);
    r.angle_deg = 30.0 * rng.real() - 15.0;

    const Affine flip = r.flipped
                            ? Affine{-1, 0, static_cast<double>(W - 1), 0, 1, 0}
                            : Affine{1, 0, 0, 0, 1, 0};
    const double sx = static_cast<double>(W) / static_cast<double>(cw);
    const double sy = static_cast<double>(H) / static_cast<double>(ch);
    const Affine crop{sx, 0, (0.5 - static_cast<double>(x0)) * sx - 0.5,
                      0, sy, (0.5 - static_cast<double>(y0)) * sy - 0.5};
    const double th = r.angle_deg * 3.141592653589793 / 180.0;
    const double cx = static_cast<double>(W - 1) / 2.0;
    const double cy = static_cast<double>(H - 1) / 2.0;
    const double cth = std::cos(th), sth = std::sin(th);
    const Affine rot{cth, -sth, cx - cth * cx + sth * cy, sth, cth, cy - sth * cx - cth * cy};
    const Affine rot_inv{cth, sth, cx - cth * cx - sth * cy, -sth, cth, cy + sth * cx - cth * cy};

    r.forward = compose(rot, compose(crop, flip));
    // crop inverse: x = x0 + (x' + 0.5)/sx - 0.5
    const Affine crop_i{1.0 / sx, 0, static_cast<double>(x0) + 0.5 / sx - 0.5,
                        0, 1.0 / sy, static_cast<double>(y0) + 0.5 / sy - 0.5};
    r.inverse = compose(flip, compose(crop_i, rot_inv));

    r.sample.id = s.id;
    r.sample.image = Tensor(s.image.shape());
    r.sample.mask = Tensor(s.mask.shape());
    for (Index yo = 0; yo < H; ++yo)
        for (Index xo = 0; xo < W; ++xo) {
            const auto [xi, yi] = apply_affine(r.inverse, static_cast<double>(xo),
                                               static_cast<double>(yo));
            // image: bilinear with edge clamping
            const double xc = std::min<double>(W - 1, std::max(0.0, xi));
            const double yc = std::min<double>(H - 1, std::max(0.0, yi));
            const Index ix = static_cast<Index>(std::floor(xc));
            const Index iy = static_cast<Index>(std::floor(yc));
            const Index ix1 = std::min(ix + 1, W - 1);
            const Index iy1 = std::min(iy + 1, H - 1);
            const double fx = xc - static_cast<double>(ix);
            const double fy = yc - static_cast<double>(iy);
            for (Index c = 0; c < 3; ++c) {
                const double v00 = s.image.at4(0, c, iy, ix);
                const double v01 = s.image.at4(0, c, iy, ix1);
                const double v10 = s.image.at4(0, c, iy1, ix);
                const double v11 = s.image.at4(0, c, iy1, ix1);
                r.sample.image.at4(0, c, yo, xo) =
                    (1 - fy) * ((1 - fx) * v00 + fx * v01) + fy * ((1 - fx) * v10 + fx * v11);
            }
            // mask: nearest with zero fill, then re-binarize
            const Index nx = static_cast<Index>(std::floor(xi + 0.5));
            const Index ny = static_cast<Index>(std::floor(yi + 0.5));
            double m = 0.0;
            if (nx >= 0 && nx < W && ny >= 0 && ny < H) m = s.mask.at4(0, 0, ny, nx);
            r.sample.mask.at4(0, 0, yo, xo) = (m > 0.5) ? 1.0 : 0.0;
        }
    return r;
}

void save_dataset(const std::vector<Sample>& samples, const std::string& root) {
    std::error_code ec;
    fs::create_directories(root + "/images", ec);
    fs::create_directories(root + "/masks", ec);
    if (ec) throw IoError("cannot create dataset directories under " + root);
    std::ofstream manifest(root + "/manifest.txt");
    if (!manifest) throw IoError("cannot write " + root + "/manifest.txt");
    for (const auto& s : samples) {
        const std::string img = "images/" + s.id + ".ppm";
        const std::string msk = "masks/" + s.id + ".pgm";
        write_ppm(root + "/" + img, s.image);
        write_pgm(root + "/" + msk, s.mask);
        manifest << s.id << "\t" << img << "\t" << msk << "\n";
    }
    if (!manifest) throw IoError("short write to " + root + "/manifest.txt");
}

std::vector<Sample> load_dataset(const std::string& root) {
    std::ifstream manifest(root + "/manifest.txt");
    if (!manifest) throw IoError("cannot read " + root + "/manifest.txt");
    std::vector<Sample> out;
    std::string line;
    while (std::getline(manifest, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string id, img, msk;
        if (!std::getline(ls, id, '\t') || !std::getline(ls, img, '\t') ||
            !std::getline(ls, msk, '\t'))
            throw IoError("malformed manifest line: " + line);
        Sample s;
        s.id = id;
        s.image = read_ppm(root + "/" + img);
        s.mask = read_pgm(root + "/" + msk);
        for (Index i = 0; i < s.mask.numel(); ++i)
            s.mask.data()[i] = (s.mask.data()[i] > 0.5) ? 1.0 : 0.0;
        if (s.image.dim(2) != s.mask.dim(2) || s.image.dim(3) != s.mask.dim(3))
            throw IoError("sample " + id + ": image and mask sizes differ");
        out.push_back(std::move(s));
    }
    return out;
}

} // namespace mvanet
