#include "jts/numcore.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace jts {

namespace {

#ifdef NDEBUG
bool g_debug_checks = false;
#else
bool g_debug_checks = true;
#endif

thread_local bool g_grad_enabled = true;

void check_finite(const std::vector<double>& v, const char* where) {
    for (double x : v) {
        if (!std::isfinite(x)) {
            throw std::runtime_error(std::string("non-finite value in ") + where);
        }
    }
}

TensorPtr new_node(std::vector<double> data, std::vector<std::int64_t> shape,
                   std::vector<TensorPtr> parents, std::function<void(Tensor&)> bwd,
                   const char* op_name) {
    if (g_debug_checks) check_finite(data, op_name);
    auto t = std::make_shared<Tensor>();
    t->shape = std::move(shape);
    t->data = std::move(data);
    bool needs = false;
    if (g_grad_enabled) {
        for (const auto& p : parents) needs = needs || p->requires_grad;
    }
    t->requires_grad = needs;
    if (needs) {
        t->grad.assign(t->data.size(), 0.0);
        t->parents = std::move(parents);
        t->backward_fn = std::move(bwd);
    }
    return t;
}

void require_rank2(const TensorPtr& t, const char* op) {
    if (t->rank() != 2) throw std::invalid_argument(std::string(op) + ": rank-2 tensor required");
}

void require_same_shape(const TensorPtr& a, const TensorPtr& b, const char* op) {
    if (a->shape != b->shape) throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

std::int64_t last_dim(const TensorPtr& t) { return t->shape.back(); }

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

void set_debug_checks(bool enabled) { g_debug_checks = enabled; }
bool debug_checks_enabled() { return g_debug_checks; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

std::int64_t shape_numel(const std::vector<std::int64_t>& shape) {
    std::int64_t n = 1;
    for (auto d : shape) {
        if (d <= 0) throw std::invalid_argument("tensor: dimensions must be positive");
        n *= d;
    }
    return n;
}

double Tensor::value() const {
    if (numel() != 1) throw std::invalid_argument("value(): tensor is not scalar");
    return data[0];
}

double Tensor::at(std::int64_t r, std::int64_t c) const {
    if (rank() != 2) throw std::invalid_argument("at(): rank-2 tensor required");
    return data[static_cast<std::size_t>(r * shape[1] + c)];
}

void Tensor::zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }

void Tensor::accumulate_grad(const double* g, std::int64_t n) {
    if (!requires_grad) return;
    if (grad.size() != static_cast<std::size_t>(n)) grad.assign(static_cast<std::size_t>(n), 0.0);
    for (std::int64_t i = 0; i < n; ++i) grad[static_cast<std::size_t>(i)] += g[i];
}

TensorPtr tensor(std::vector<double> data, std::vector<std::int64_t> shape, bool requires_grad) {
    if (shape_numel(shape) != static_cast<std::int64_t>(data.size())) {
        throw std::invalid_argument("tensor: data length does not match shape");
    }
    check_finite(data, "tensor construction");
    auto t = std::make_shared<Tensor>();
    t->shape = std::move(shape);
    t->data = std::move(data);
    t->requires_grad = requires_grad;
    if (requires_grad) t->grad.assign(t->data.size(), 0.0);
    return t;
}

TensorPtr scalar(double v, bool requires_grad) { return tensor({v}, {1}, requires_grad); }

TensorPtr zeros(std::vector<std::int64_t> shape, bool requires_grad) {
    return full(std::move(shape), 0.0, requires_grad);
}

TensorPtr full(std::vector<std::int64_t> shape, double v, bool requires_grad) {
    std::vector<double> d(static_cast<std::size_t>(shape_numel(shape)), v);
    return tensor(std::move(d), std::move(shape), requires_grad);
}

void mm_acc(const double* a, const double* b, double* c, std::int64_t m, std::int64_t k,
            std::int64_t n) {
    for (std::int64_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (std::int64_t p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            const double* brow = b + p * n;
            for (std::int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void mm_nt_acc(const double* a, const double* b, double* c, std::int64_t m, std::int64_t n,
               std::int64_t k) {
    for (std::int64_t i = 0; i < m; ++i) {
        const double* arow = a + i * n;
        double* crow = c + i * k;
        for (std::int64_t j = 0; j < k; ++j) {
            const double* brow = b + j * n;
            double acc = 0.0;
            for (std::int64_t p = 0; p < n; ++p) acc += arow[p] * brow[p];
            crow[j] += acc;
        }
    }
}

void mm_tn_acc(const double* a, const double* b, double* c, std::int64_t m, std::int64_t k,
               std::int64_t n) {
    for (std::int64_t p = 0; p < m; ++p) {
        const double* arow = a + p * k;
        const double* brow = b + p * n;
        for (std::int64_t i = 0; i < k; ++i) {
            const double av = arow[i];
            if (av == 0.0) continue;
            double* crow = c + i * n;
            for (std::int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

TensorPtr matmul(const TensorPtr& a, const TensorPtr& b) {
    require_rank2(a, "matmul");
    require_rank2(b, "matmul");
    const std::int64_t m = a->dim(0), k = a->dim(1), n = b->dim(1);
    if (k != b->dim(0)) throw std::invalid_argument("matmul: inner dimensions differ");
    std::vector<double> out(static_cast<std::size_t>(m * n), 0.0);
    mm_acc(a->data.data(), b->data.data(), out.data(), m, k, n);
    return new_node(
        std::move(out), {m, n}, {a, b},
        [m, k, n](Tensor& self) {
            const auto& pa = self.parents[0];
            const auto& pb = self.parents[1];
            if (pa->requires_grad) {
                mm_nt_acc(self.grad.data(), pb->data.data(), pa->grad.data(), m, n, k);
            }
            if (pb->requires_grad) {
                mm_tn_acc(pa->data.data(), self.grad.data(), pb->grad.data(), m, k, n);
            }
        },
        "matmul");
}

TensorPtr transpose(const TensorPtr& a) {
    require_rank2(a, "transpose");
    const std::int64_t m = a->dim(0), n = a->dim(1);
    std::vector<double> out(static_cast<std::size_t>(m * n));
    for (std::int64_t i = 0; i < m; ++i)
        for (std::int64_t j = 0; j < n; ++j)
            out[static_cast<std::size_t>(j * m + i)] = a->data[static_cast<std::size_t>(i * n + j)];
    return new_node(
        std::move(out), {n, m}, {a},
        [m, n](Tensor& self) {
            auto& pg = self.parents[0]->grad;
            for (std::int64_t i = 0; i < m; ++i)
                for (std::int64_t j = 0; j < n; ++j)
                    pg[static_cast<std::size_t>(i * n + j)] +=
                        self.grad[static_cast<std::size_t>(j * m + i)];
        },
        "transpose");
}

TensorPtr add(const TensorPtr& a, const TensorPtr& b) {
    require_same_shape(a, b, "add");
    std::vector<double> out(a->data.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->data[i] + b->data[i];
    return new_node(
        std::move(out), a->shape, {a, b},
        [](Tensor& self) {
            for (auto& p : self.parents) {
                p->accumulate_grad(self.grad.data(), self.numel());
            }
        },
        "add");
}

TensorPtr sub(const TensorPtr& a, const TensorPtr& b) {
    require_same_shape(a, b, "sub");
    std::vector<double> out(a->data.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->data[i] - b->data[i];
    return new_node(
        std::move(out), a->shape, {a, b},
        [](Tensor& self) {
            auto& pa = self.parents[0];
            auto& pb = self.parents[1];
            pa->accumulate_grad(self.grad.data(), self.numel());
            if (pb->requires_grad) {
                for (std::size_t i = 0; i < self.grad.size(); ++i) pb->grad[i] -= self.grad[i];
            }
        },
        "sub");
}

TensorPtr hadamard(const TensorPtr& a, const TensorPtr& b) {
    require_same_shape(a, b, "hadamard");
    std::vector<double> out(a->data.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->data[i] * b->data[i];
    return new_node(
        std::move(out), a->shape, {a, b},
        [](Tensor& self) {
            auto& pa = self.parents[0];
            auto& pb = self.parents[1];
            if (pa->requires_grad)
                for (std::size_t i = 0; i < self.grad.size(); ++i)
                    pa->grad[i] += self.grad[i] * pb->data[i];
            if (pb->requires_grad)
                for (std::size_t i = 0; i < self.grad.size(); ++i)
                    pb->grad[i] += self.grad[i] * pa->data[i];
        },
        "hadamard");
}

TensorPtr affine(const TensorPtr& a, double mul, double shift) {
    std::vector<double> out(a->data.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->data[i] * mul + shift;
    return new_node(
        std::move(out), a->shape, {a},
        [mul](Tensor& self) {
            auto& pg = self.parents[0]->grad;
            for (std::size_t i = 0; i < self.grad.size(); ++i) pg[i] += self.grad[i] * mul;
        },
        "affine");
}

TensorPtr sum(const TensorPtr& a) {
    double acc = 0.0;
    for (double v : a->data) acc += v;
    return new_node(
        {acc}, {1}, {a},
        [](Tensor& self) {
            auto& p = self.parents[0];
            const double g = self.grad[0];
            for (auto& pg : p->grad) pg += g;
        },
        "sum");
}

TensorPtr softmax_lastdim(const TensorPtr& a) {
    const std::int64_t d = last_dim(a);
    if (d < 1) throw std::invalid_argument("softmax_lastdim: empty last dimension");
    const std::int64_t rows = a->numel() / d;
    std::vector<double> out(a->data.size());
    for (std::int64_t r = 0; r < rows; ++r) {
        const double* x = a->data.data() + r * d;
        double* y = out.data() + r * d;
        double mx = x[0];
        for (std::int64_t j = 1; j < d; ++j) mx = std::max(mx, x[j]);
        double z = 0.0;
        for (std::int64_t j = 0; j < d; ++j) {
            y[j] = std::exp(x[j] - mx);
            z += y[j];
        }
        for (std::int64_t j = 0; j < d; ++j) y[j] /= z;
    }
    return new_node(
        std::move(out), a->shape, {a},
        [d, rows](Tensor& self) {
            auto& pg = self.parents[0]->grad;
            for (std::int64_t r = 0; r < rows; ++r) {
                const double* s = self.data.data() + r * d;
                const double* go = self.grad.data() + r * d;
                double dot = 0.0;
                for (std::int64_t j = 0; j < d; ++j) dot += go[j] * s[j];
                double* g = pg.data() + r * d;
                for (std::int64_t j = 0; j < d; ++j) g[j] += s[j] * (go[j] - dot);
            }
        },
        "softmax_lastdim");
}

TensorPtr rms_norm(const TensorPtr& a, const TensorPtr& gain, double eps) {
    const std::int64_t d = last_dim(a);
    if (gain->numel() != d) throw std::invalid_argument("rms_norm: gain length must equal last dim");
    if (eps < 0.0) throw std::invalid_argument("rms_norm: eps must be nonnegative");
    const std::int64_t rows = a->numel() / d;
    std::vector<double> out(a->data.size());
    std::vector<double> inv_r(static_cast<std::size_t>(rows));
    for (std::int64_t r = 0; r < rows; ++r) {
        const double* x = a->data.data() + r * d;
        double msq = 0.0;
        for (std::int64_t j = 0; j < d; ++j) msq += x[j] * x[j];
        msq /= static_cast<double>(d);
        const double ir = 1.0 / std::sqrt(msq + eps);
        inv_r[static_cast<std::size_t>(r)] = ir;
        double* y = out.data() + r * d;
        for (std::int64_t j = 0; j < d; ++j) y[j] = x[j] * ir * gain->data[static_cast<std::size_t>(j)];
    }
    return new_node(
        std::move(out), a->shape, {a, gain},
        [d, rows, inv_r = std::move(inv_r)](Tensor& self) {
            auto& pa = self.parents[0];
            auto& pgain = self.parents[1];
            for (std::int64_t r = 0; r < rows; ++r) {
                const double* x = pa->data.data() + r * d;
                const double* go = self.grad.data() + r * d;
                const double ir = inv_r[static_cast<std::size_t>(r)];
                if (pgain->requires_grad) {
                    for (std::int64_t j = 0; j < d; ++j)
                        pgain->grad[static_cast<std::size_t>(j)] += go[j] * x[j] * ir;
                }
                if (pa->requires_grad) {
                    double dot = 0.0;
                    for (std::int64_t j = 0; j < d; ++j)
                        dot += go[j] * pgain->data[static_cast<std::size_t>(j)] * x[j];
                    const double scale = dot * ir * ir * ir / static_cast<double>(d);
                    double* g = pa->grad.data() + r * d;
                    for (std::int64_t j = 0; j < d; ++j)
                        g[j] += go[j] * pgain->data[static_cast<std::size_t>(j)] * ir - x[j] * scale;
                }
            }
        },
        "rms_norm");
}

TensorPtr swiglu_ffn(const TensorPtr& x, const TensorPtr& w_gate, const TensorPtr& w_up,
                     const TensorPtr& w_down) {
    require_rank2(x, "swiglu_ffn");
    require_rank2(w_gate, "swiglu_ffn");
    require_rank2(w_up, "swiglu_ffn");
    require_rank2(w_down, "swiglu_ffn");
    const std::int64_t n = x->dim(0), d = x->dim(1), f = w_gate->dim(1);
    if (w_gate->dim(0) != d || w_up->dim(0) != d || w_up->dim(1) != f || w_down->dim(0) != f) {
        throw std::invalid_argument("swiglu_ffn: weight shape mismatch");
    }
    const std::int64_t dout = w_down->dim(1);
    std::vector<double> g(static_cast<std::size_t>(n * f), 0.0);
    std::vector<double> u(static_cast<std::size_t>(n * f), 0.0);
    mm_acc(x->data.data(), w_gate->data.data(), g.data(), n, d, f);
    mm_acc(x->data.data(), w_up->data.data(), u.data(), n, d, f);
    std::vector<double> h(static_cast<std::size_t>(n * f));
    for (std::size_t i = 0; i < h.size(); ++i) h[i] = g[i] * sigmoid(g[i]) * u[i];
    std::vector<double> out(static_cast<std::size_t>(n * dout), 0.0);
    mm_acc(h.data(), w_down->data.data(), out.data(), n, f, dout);
    return new_node(
        std::move(out), {n, dout}, {x, w_gate, w_up, w_down},
        [n, d, f, dout, g = std::move(g), u = std::move(u), h = std::move(h)](Tensor& self) {
            auto& px = self.parents[0];
            auto& pwg = self.parents[1];
            auto& pwu = self.parents[2];
            auto& pwd = self.parents[3];
            std::vector<double> dh(static_cast<std::size_t>(n * f), 0.0);
            mm_nt_acc(self.grad.data(), pwd->data.data(), dh.data(), n, dout, f);
            if (pwd->requires_grad) {
                mm_tn_acc(h.data(), self.grad.data(), pwd->grad.data(), n, f, dout);
            }
            std::vector<double> dg(static_cast<std::size_t>(n * f));
            std::vector<double> du(static_cast<std::size_t>(n * f));
            for (std::size_t i = 0; i < dh.size(); ++i) {
                const double s = sigmoid(g[i]);
                const double silu = g[i] * s;
                du[i] = dh[i] * silu;
                dg[i] = dh[i] * u[i] * (s + silu * (1.0 - s));
            }
            if (px->requires_grad) {
                mm_nt_acc(dg.data(), pwg->data.data(), px->grad.data(), n, f, d);
                mm_nt_acc(du.data(), pwu->data.data(), px->grad.data(), n, f, d);
            }
            if (pwg->requires_grad) mm_tn_acc(px->data.data(), dg.data(), pwg->grad.data(), n, d, f);
            if (pwu->requires_grad) mm_tn_acc(px->data.data(), du.data(), pwu->grad.data(), n, d, f);
        },
        "swiglu_ffn");
}

TensorPtr rope_apply(const TensorPtr& a, const std::vector<std::int64_t>& positions, double base) {
    require_rank2(a, "rope_apply");
    const std::int64_t n = a->dim(0), d = a->dim(1);
    if (d % 2 != 0) throw std::invalid_argument("rope_apply: last dimension must be even");
    if (static_cast<std::int64_t>(positions.size()) != n) {
        throw std::invalid_argument("rope_apply: one position per token required");
    }
    if (base <= 0.0) throw std::invalid_argument("rope_apply: base must be positive");
    const std::int64_t pairs = d / 2;
    std::vector<double> freqs(static_cast<std::size_t>(pairs));
    for (std::int64_t i = 0; i < pairs; ++i) {
        freqs[static_cast<std::size_t>(i)] =
            std::pow(base, -2.0 * static_cast<double>(i) / static_cast<double>(d));
    }
    std::vector<double> out(a->data.size());
    std::vector<double> cs(static_cast<std::size_t>(n * pairs)), sn(static_cast<std::size_t>(n * pairs));
    for (std::int64_t r = 0; r < n; ++r) {
        const double pos = static_cast<double>(positions[static_cast<std::size_t>(r)]);
        const double* x = a->data.data() + r * d;
        double* y = out.data() + r * d;
        for (std::int64_t i = 0; i < pairs; ++i) {
            const double th = pos * freqs[static_cast<std::size_t>(i)];
            const double c = std::cos(th), s = std::sin(th);
            cs[static_cast<std::size_t>(r * pairs + i)] = c;
            sn[static_cast<std::size_t>(r * pairs + i)] = s;
            const double x0 = x[2 * i], x1 = x[2 * i + 1];
            y[2 * i] = x0 * c - x1 * s;
            y[2 * i + 1] = x0 * s + x1 * c;
        }
    }
    return new_node(
        std::move(out), a->shape, {a},
        [n, d, pairs, cs = std::move(cs), sn = std::move(sn)](Tensor& self) {
            auto& pg = self.parents[0]->grad;
            for (std::int64_t r = 0; r < n; ++r) {
                const double* go = self.grad.data() + r * d;
                double* g = pg.data() + r * d;
                for (std::int64_t i = 0; i < pairs; ++i) {
                    const double c = cs[static_cast<std::size_t>(r * pairs + i)];
                    const double s = sn[static_cast<std::size_t>(r * pairs + i)];
                    // Inverse rotation on the incoming gradient.
                    g[2 * i] += go[2 * i] * c + go[2 * i + 1] * s;
                    g[2 * i + 1] += -go[2 * i] * s + go[2 * i + 1] * c;
                }
            }
        },
        "rope_apply");
}

TensorPtr slice_cols(const TensorPtr& a, std::int64_t start, std::int64_t len) {
    require_rank2(a, "slice_cols");
    const std::int64_t n = a->dim(0), d = a->dim(1);
    if (start < 0 || len <= 0 || start + len > d) {
        throw std::invalid_argument("slice_cols: range out of bounds");
    }
    std::vector<double> out(static_cast<std::size_t>(n * len));
    for (std::int64_t r = 0; r < n; ++r)
        for (std::int64_t j = 0; j < len; ++j)
            out[static_cast<std::size_t>(r * len + j)] =
                a->data[static_cast<std::size_t>(r * d + start + j)];
    return new_node(
        std::move(out), {n, len}, {a},
        [n, d, start, len](Tensor& self) {
            auto& pg = self.parents[0]->grad;
            for (std::int64_t r = 0; r < n; ++r)
                for (std::int64_t j = 0; j < len; ++j)
                    pg[static_cast<std::size_t>(r * d + start + j)] +=
                        self.grad[static_cast<std::size_t>(r * len + j)];
        },
        "slice_cols");
}

TensorPtr concat_cols(const std::vector<TensorPtr>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: no parts");
    const std::int64_t n = parts[0]->dim(0);
    std::int64_t total = 0;
    for (const auto& p : parts) {
        require_rank2(p, "concat_cols");
        if (p->dim(0) != n) throw std::invalid_argument("concat_cols: row count mismatch");
        total += p->dim(1);
    }
    std::vector<double> out(static_cast<std::size_t>(n * total));
    std::vector<std::int64_t> offsets(parts.size());
    std::int64_t off = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
        offsets[k] = off;
        const std::int64_t w = parts[k]->dim(1);
        for (std::int64_t r = 0; r < n; ++r)
            for (std::int64_t j = 0; j < w; ++j)
                out[static_cast<std::size_t>(r * total + off + j)] =
                    parts[k]->data[static_cast<std::size_t>(r * w + j)];
        off += w;
    }
    return new_node(
        std::move(out), {n, total}, parts,
        [n, total, offsets = std::move(offsets)](Tensor& self) {
            for (std::size_t k = 0; k < self.parents.size(); ++k) {
                auto& p = self.parents[k];
                if (!p->requires_grad) continue;
                const std::int64_t w = p->dim(1);
                const std::int64_t off = offsets[k];
                for (std::int64_t r = 0; r < n; ++r)
                    for (std::int64_t j = 0; j < w; ++j)
                        p->grad[static_cast<std::size_t>(r * w + j)] +=
                            self.grad[static_cast<std::size_t>(r * total + off + j)];
            }
        },
        "concat_cols");
}

TensorPtr gather_rows(const TensorPtr& a, const std::vector<std::int64_t>& idx) {
    require_rank2(a, "gather_rows");
    const std::int64_t n = a->dim(0), d = a->dim(1);
    for (auto i : idx) {
        if (i < 0 || i >= n) throw std::invalid_argument("gather_rows: index out of range");
    }
    const std::int64_t m = static_cast<std::int64_t>(idx.size());
    std::vector<double> out(static_cast<std::size_t>(m * d));
    for (std::int64_t r = 0; r < m; ++r) {
        const double* src = a->data.data() + idx[static_cast<std::size_t>(r)] * d;
        std::copy(src, src + d, out.data() + r * d);
    }
    return new_node(
        std::move(out), {m, d}, {a},
        [d, idx](Tensor& self) {
            auto& pg = self.parents[0]->grad;
            for (std::size_t r = 0; r < idx.size(); ++r) {
                const double* go = self.grad.data() + static_cast<std::int64_t>(r) * d;
                double* g = pg.data() + idx[r] * d;
                for (std::int64_t j = 0; j < d; ++j) g[j] += go[j];
            }
        },
        "gather_rows");
}

TensorPtr mask_merge_rows(const TensorPtr& rows, const TensorPtr& mask_row,
                          const std::vector<std::int64_t>& mask_idx) {
    require_rank2(rows, "mask_merge_rows");
    const std::int64_t n = rows->dim(0), d = rows->dim(1);
    if (mask_row->numel() != d) {
        throw std::invalid_argument("mask_merge_rows: mask row width mismatch");
    }
    for (auto i : mask_idx) {
        if (i < 0 || i >= n) throw std::invalid_argument("mask_merge_rows: index out of range");
    }
    std::vector<double> out = rows->data;
    for (auto i : mask_idx) {
        std::copy(mask_row->data.begin(), mask_row->data.end(), out.begin() + i * d);
    }
    std::vector<bool> masked(static_cast<std::size_t>(n), false);
    for (auto i : mask_idx) masked[static_cast<std::size_t>(i)] = true;
    return new_node(
        std::move(out), rows->shape, {rows, mask_row},
        [n, d, masked = std::move(masked)](Tensor& self) {
            auto& prows = self.parents[0];
            auto& pmask = self.parents[1];
            for (std::int64_t r = 0; r < n; ++r) {
                const double* go = self.grad.data() + r * d;
                if (masked[static_cast<std::size_t>(r)]) {
                    if (pmask->requires_grad)
                        for (std::int64_t j = 0; j < d; ++j) pmask->grad[static_cast<std::size_t>(j)] += go[j];
                } else {
                    if (prows->requires_grad) {
                        double* g = prows->grad.data() + r * d;
                        for (std::int64_t j = 0; j < d; ++j) g[j] += go[j];
                    }
                }
            }
        },
        "mask_merge_rows");
}

TensorPtr add_rowvec(const TensorPtr& a, const TensorPtr& row) {
    require_rank2(a, "add_rowvec");
    const std::int64_t n = a->dim(0), d = a->dim(1);
    if (row->numel() != d) throw std::invalid_argument("add_rowvec: row width mismatch");
    std::vector<double> out(a->data.size());
    for (std::int64_t r = 0; r < n; ++r)
        for (std::int64_t j = 0; j < d; ++j)
            out[static_cast<std::size_t>(r * d + j)] =
                a->data[static_cast<std::size_t>(r * d + j)] + row->data[static_cast<std::size_t>(j)];
    return new_node(
        std::move(out), a->shape, {a, row},
        [n, d](Tensor& self) {
            auto& pa = self.parents[0];
            auto& prow = self.parents[1];
            if (pa->requires_grad) pa->accumulate_grad(self.grad.data(), self.numel());
            if (prow->requires_grad) {
                for (std::int64_t r = 0; r < n; ++r)
                    for (std::int64_t j = 0; j < d; ++j)
                        prow->grad[static_cast<std::size_t>(j)] +=
                            self.grad[static_cast<std::size_t>(r * d + j)];
            }
        },
        "add_rowvec");
}

TensorPtr make_op(std::vector<double> data, std::vector<std::int64_t> shape,
                  std::vector<TensorPtr> parents, std::function<void(Tensor&)> bwd) {
    if (shape_numel(shape) != static_cast<std::int64_t>(data.size())) {
        throw std::invalid_argument("make_op: data length does not match shape");
    }
    return new_node(std::move(data), std::move(shape), std::move(parents), std::move(bwd),
                    "make_op");
}

void backward(const TensorPtr& loss) {
    if (loss->numel() != 1) throw std::invalid_argument("backward: loss must be scalar");
    if (!loss->requires_grad) return;

    // Iterative post-order topological sort over grad-requiring nodes.
    std::vector<Tensor*> order;
    std::unordered_set<Tensor*> seen;
    std::vector<std::pair<Tensor*, std::size_t>> stack;
    stack.emplace_back(loss.get(), 0);
    seen.insert(loss.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Tensor* p = node->parents[next].get();
            ++next;
            if (p->requires_grad && !seen.count(p)) {
                seen.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    loss->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Tensor* node = *it;
        if (node->backward_fn) node->backward_fn(*node);
    }
}

}  // namespace jts
