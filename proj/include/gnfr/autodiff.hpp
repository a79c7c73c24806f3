#ifndef GNFR_AUTODIFF_HPP
#define GNFR_AUTODIFF_HPP

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

namespace gnfr::nn {

// 64-byte-aligned storage for all tensor data. Fixing the alignment keeps
// vectorized kernels on identical code paths every run, which end-to-end
// byte determinism depends on.
template <class T>
struct AlignedAlloc {
    using value_type = T;
    AlignedAlloc() = default;
    template <class U>
    AlignedAlloc(const AlignedAlloc<U>&) {}
    T* allocate(std::size_t n) {
        return static_cast<T*>(::operator new(n * sizeof(T), std::align_val_t(64)));
    }
    void deallocate(T* p, std::size_t) { ::operator delete(p, std::align_val_t(64)); }
    template <class U>
    bool operator==(const AlignedAlloc<U>&) const {
        return true;
    }
};
using dvec = std::vector<double, AlignedAlloc<double>>;

// Dense row-major tensor of doubles.
struct Tensor {
    std::vector<int> shape;
    dvec v;

    Tensor() = default;
    explicit Tensor(std::vector<int> s, double fill = 0.0) : shape(std::move(s)) {
        v.assign(numel_of(shape), fill);
    }
    Tensor(std::vector<int> s, dvec data) : shape(std::move(s)), v(std::move(data)) {}

    static size_t numel_of(const std::vector<int>& s) {
        size_t n = 1;
        for (int d : s) n *= static_cast<size_t>(d);
        return n;
    }
    size_t numel() const { return v.size(); }
    int dim(int i) const { return shape[i]; }
};

struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
    Tensor val;
    dvec grad;  // allocated on demand, same size as val.v
    std::vector<Var> parents;
    std::function<void(Node&)> backward_fn;
    bool requires_grad = false;

    void ensure_grad() {
        if (grad.size() != val.numel()) grad.assign(val.numel(), 0.0);
    }
};

// When false, ops compute values only and record no graph (inference mode).
bool& grad_enabled();

struct NoGradGuard {
    NoGradGuard() : prev_(grad_enabled()) { grad_enabled() = false; }
    ~NoGradGuard() { grad_enabled() = prev_; }

  private:
    bool prev_;
};

Var constant(Tensor t);
Var make_param(Tensor t);

// Runs reverse accumulation from a scalar loss (numel must be 1).
void backward(const Var& loss);

// --- elementwise -----------------------------------------------------------
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var relu(const Var& a);
Var sigmoid(const Var& a);

// --- dense -----------------------------------------------------------------
// x: [R, Din], w: [Din, Dout], b: [Dout] (may be null) -> [R, Dout]
Var linear(const Var& x, const Var& w, const Var& b);

// x: [R, D]; gamma/beta: [D]
Var layernorm_rows(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-6);

// x treated as [R, C] rows; softmax over the last dimension
Var softmax_rows(const Var& x, int cols);

// prob: [R, C]; keep: constant 0/1 mask [R, C]; rows whose kept mass is ~0
// are replaced by the (constant) fallback row. If renormalize, surviving
// rows are rescaled to sum 1.
Var masked_renorm_rows(const Var& prob, int cols, const std::vector<double>& keep,
                       const std::vector<double>& fallback, bool renormalize);

// q: [G, Tq, Dh], k: [G, Tk, Dh] -> [G, Tq, Tk], scaled by `scale`
Var attn_scores(const Var& q, const Var& k, int groups, int tq, int tk, int dh, double scale);
// w: [G, Tq, Tk], v: [G, Tk, Dh] -> [G, Tq, Dh]
Var attn_apply(const Var& w, const Var& v, int groups, int tq, int tk, int dh);

// out.v[i] = idx[i] >= 0 ? x.v[idx[i]] : 0. Covers reshape/permute/concat/
// im2col; backward scatter-adds (duplicate indices accumulate).
Var permute_gather(const Var& x, const std::shared_ptr<std::vector<int64_t>>& idx,
                   std::vector<int> out_shape);

// Sparse fixed-weight row mixer: rows of x are C-vectors (x: [Ncells, C]);
// out row r = sum_t wts[t] * x[cells[t]] over taps offsets[r]..offsets[r+1].
// Covers bilinear interpolation, upsampling and average pooling.
struct RowTaps {
    std::vector<int> offsets;    // size R+1
    std::vector<int> cells;      // cell (row) indices into x
    std::vector<double> wts;
};
Var gather_rows(const Var& x, const std::shared_ptr<RowTaps>& taps, int cols);

// Mean over the rows of each fixed-size group: x [G*M, D] -> [G, D].
Var mean_groups(const Var& x, int group_size, int cols);

Var sum_all(const Var& x);
Var mean_all(const Var& x);

// Masked per-row MSE: mean over rows with keep=1 of squared error summed over
// C, divided by (unmasked rows * C). Returns scalar 0 if all rows masked.
Var masked_mse(const Var& pred, const std::vector<double>& target,
               const std::vector<double>& keep_row, int cols);

// Class-weighted binary cross entropy on logits; target in {0,1}.
// loss = -mean[w1*t*log(sig) + w0*(1-t)*log(1-sig)]
Var weighted_bce_logits(const Var& logits, const std::vector<double>& target, double w_pos,
                        double w_neg);

}  // namespace gnfr::nn

#endif
