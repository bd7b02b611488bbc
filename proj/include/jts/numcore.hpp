#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

namespace jts {

class Tensor;
using TensorPtr = std::shared_ptr<Tensor>;

// Dense row-major tensor of doubles with eager reverse-mode autodiff.
// Nodes own their parents; a graph lives as long as someone holds its root.
// Data is immutable after construction except for gradient accumulation.
class Tensor : public std::enable_shared_from_this<Tensor> {
public:
    std::vector<std::int64_t> shape;
    std::vector<double> data;
    std::vector<double> grad;  // same length as data when requires_grad
    bool requires_grad = false;

    std::vector<TensorPtr> parents;
    std::function<void(Tensor&)> backward_fn;  // empty for leaves

    std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
    std::int64_t rank() const { return static_cast<std::int64_t>(shape.size()); }
    std::int64_t dim(std::int64_t i) const { return shape[static_cast<std::size_t>(i)]; }

    double value() const;                                // scalar tensors only
    double at(std::int64_t r, std::int64_t c) const;     // rank-2 accessor
    void zero_grad();
    void accumulate_grad(const double* g, std::int64_t n);
};

// When enabled, every op output is checked for NaN/Inf. Defaults to on in
// debug builds. Construction from user data is always checked.
void set_debug_checks(bool enabled);
bool debug_checks_enabled();

// Suspends graph construction; ops built under a guard are constants.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

std::int64_t shape_numel(const std::vector<std::int64_t>& shape);

// ---- Construction ----
TensorPtr tensor(std::vector<double> data, std::vector<std::int64_t> shape,
                 bool requires_grad = false);
TensorPtr scalar(double v, bool requires_grad = false);
TensorPtr zeros(std::vector<std::int64_t> shape, bool requires_grad = false);
TensorPtr full(std::vector<std::int64_t> shape, double v, bool requires_grad = false);

// ---- Primitive ops (none mutates its inputs) ----
TensorPtr matmul(const TensorPtr& a, const TensorPtr& b);
TensorPtr transpose(const TensorPtr& a);
TensorPtr add(const TensorPtr& a, const TensorPtr& b);
TensorPtr sub(const TensorPtr& a, const TensorPtr& b);
TensorPtr hadamard(const TensorPtr& a, const TensorPtr& b);
TensorPtr affine(const TensorPtr& a, double mul, double shift);
TensorPtr sum(const TensorPtr& a);
TensorPtr softmax_lastdim(const TensorPtr& a);
TensorPtr rms_norm(const TensorPtr& a, const TensorPtr& gain, double eps = 1e-6);
TensorPtr swiglu_ffn(const TensorPtr& x, const TensorPtr& w_gate, const TensorPtr& w_up,
                     const TensorPtr& w_down);
TensorPtr rope_apply(const TensorPtr& a, const std::vector<std::int64_t>& positions,
                     double base = 10000.0);

// Row/column plumbing for attention heads and token selection.
TensorPtr slice_cols(const TensorPtr& a, std::int64_t start, std::int64_t len);
TensorPtr concat_cols(const std::vector<TensorPtr>& parts);
TensorPtr gather_rows(const TensorPtr& a, const std::vector<std::int64_t>& idx);
// out[i] = mask_row for i in mask_idx, otherwise rows[i].
TensorPtr mask_merge_rows(const TensorPtr& rows, const TensorPtr& mask_row,
                          const std::vector<std::int64_t>& mask_idx);
TensorPtr add_rowvec(const TensorPtr& a, const TensorPtr& row);

// Custom node hook: output with explicit parents and backward closure.
TensorPtr make_op(std::vector<double> data, std::vector<std::int64_t> shape,
                  std::vector<TensorPtr> parents, std::function<void(Tensor&)> bwd);

// Reverse-mode sweep from a scalar loss. Repeated calls accumulate.
void backward(const TensorPtr& loss);

// Raw accumulate kernels, exposed for reuse in hot paths.
// C[m,n] += A[m,k] * B[k,n]
void mm_acc(const double* a, const double* b, double* c, std::int64_t m, std::int64_t k,
            std::int64_t n);
// C[m,k] += A[m,n] * B[k,n]^T
void mm_nt_acc(const double* a, const double* b, double* c, std::int64_t m, std::int64_t n,
               std::int64_t k);
// C[k,n] += A[m,k]^T * B[m,n]
void mm_tn_acc(const double* a, const double* b, double* c, std::int64_t m, std::int64_t k,
               std::int64_t n);

}  // namespace jts
