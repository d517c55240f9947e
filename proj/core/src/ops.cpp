#include "cdaae/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <string>

namespace cdaae {

namespace {

template <class T>
using Node = detail::Node<T>;
template <class T>
using NodePtr = std::shared_ptr<Node<T>>;
template <class T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatrixMap = Eigen::Map<Matrix<T>>;
template <class T>
using ConstMatrixMap = Eigen::Map<const Matrix<T>>;

template <class T>
BasicTensor<T> make_result(Shape shape, std::vector<T> value, std::string_view op,
                           std::vector<NodePtr<T>> inputs, std::function<void(Node<T>&)> backward)
{
    auto node = std::make_shared<Node<T>>();
    node->shape = std::move(shape);
    node->value = std::move(value);
    node->op = op;
    bool needs = std::any_of(inputs.begin(), inputs.end(), [](const auto& n) { return n->requires_grad; });
    if (needs) {
        node->requires_grad = true;
        node->inputs = std::move(inputs);
        node->backward = std::move(backward);
    }
    return BasicTensor<T>::from_node(std::move(node));
}

void require(bool ok, const std::string& what)
{
    if (!ok) throw DimensionError(what);
}

template <class T>
void require_same_shape(const BasicTensor<T>& a, const BasicTensor<T>& b, const char* op)
{
    require(a.shape() == b.shape(),
            std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
}

template <class T>
std::vector<T>& grad_of(Node<T>& n)
{
    n.ensure_grad();
    return n.grad;
}

// Unfolds receptive fields of a batch of C×H×W images into a
// (C·K·K) × (N·OH·OW) matrix; column = n·OH·OW + oh·OW + ow.
template <class T>
void im2col(const T* image, std::size_t batch, std::size_t channels, std::size_t height, std::size_t width,
            std::size_t kernel, std::size_t stride, std::size_t padding, std::size_t out_h, std::size_t out_w,
            T* cols)
{
    const std::size_t plane = out_h * out_w;
    const std::size_t ncols = batch * plane;
    for (std::size_t c = 0; c < channels; ++c)
        for (std::size_t kh = 0; kh < kernel; ++kh)
            for (std::size_t kw = 0; kw < kernel; ++kw) {
                T* row = cols + ((c * kernel + kh) * kernel + kw) * ncols;
                for (std::size_t n = 0; n < batch; ++n) {
                    const T* src = image + (n * channels + c) * height * width;
                    T* dst = row + n * plane;
                    for (std::size_t oh = 0; oh < out_h; ++oh) {
                        const long ih = static_cast<long>(oh * stride + kh) - static_cast<long>(padding);
                        T* drow = dst + oh * out_w;
                        if (ih < 0 || ih >= static_cast<long>(height)) {
                            std::fill(drow, drow + out_w, T(0));
                            continue;
                        }
                        const T* srow = src + ih * width;
                        for (std::size_t ow = 0; ow < out_w; ++ow) {
                            const long iw = static_cast<long>(ow * stride + kw) - static_cast<long>(padding);
                            drow[ow] = (iw < 0 || iw >= static_cast<long>(width)) ? T(0) : srow[iw];
                        }
                    }
                }
            }
}

// Adjoint of im2col: scatters columns back, accumulating into image.
template <class T>
void col2im(const T* cols, std::size_t batch, std::size_t channels, std::size_t height, std::size_t width,
            std::size_t kernel, std::size_t stride, std::size_t padding, std::size_t out_h, std::size_t out_w,
            T* image)
{
    const std::size_t plane = out_h * out_w;
    const std::size_t ncols = batch * plane;
    for (std::size_t c = 0; c < channels; ++c)
        for (std::size_t kh = 0; kh < kernel; ++kh)
            for (std::size_t kw = 0; kw < kernel; ++kw) {
                const T* row = cols + ((c * kernel + kh) * kernel + kw) * ncols;
                for (std::size_t n = 0; n < batch; ++n) {
                    T* dst = image + (n * channels + c) * height * width;
                    const T* src = row + n * plane;
                    for (std::size_t oh = 0; oh < out_h; ++oh) {
                        const long ih = static_cast<long>(oh * stride + kh) - static_cast<long>(padding);
                        if (ih < 0 || ih >= static_cast<long>(height)) continue;
                        T* drow = dst + ih * width;
                        const T* srow = src + oh * out_w;
                        for (std::size_t ow = 0; ow < out_w; ++ow) {
                            const long iw = static_cast<long>(ow * stride + kw) - static_cast<long>(padding);
                            if (iw >= 0 && iw < static_cast<long>(width)) drow[iw] += srow[ow];
                        }
                    }
                }
            }
}

// NCHW (N, C, P) <-> channel-major (C, N·P).
template <class T>
void batch_to_channel_major(const T* src, std::size_t n, std::size_t c, std::size_t p, T* dst)
{
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t ch = 0; ch < c; ++ch)
            std::copy_n(src + (i * c + ch) * p, p, dst + ch * n * p + i * p);
}

template <class T>
void channel_major_to_batch(const T* src, std::size_t n, std::size_t c, std::size_t p, T* dst)
{
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t ch = 0; ch < c; ++ch)
            std::copy_n(src + ch * n * p + i * p, p, dst + (i * c + ch) * p);
}

template <class T, class F, class G>
BasicTensor<T> unary(const BasicTensor<T>& a, std::string_view name, F forward, G derivative)
{
    std::vector<T> out(a.size());
    auto in = a.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = forward(in[i]);
    return make_result<T>(a.shape(), std::move(out), name, {a.node()},
                          [derivative](Node<T>& self) {
                              auto& x = *self.inputs[0];
                              auto& gx = grad_of(x);
                              for (std::size_t i = 0; i < gx.size(); ++i)
                                  gx[i] += self.grad[i] * derivative(x.value[i], self.value[i]);
                          });
}

} // namespace

template <class T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b)
{
    require_same_shape(a, b, "add");
    std::vector<T> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
    return make_result<T>(a.shape(), std::move(out), "add", {a.node(), b.node()}, [](Node<T>& self) {
        for (auto& in : self.inputs) {
            if (!in->requires_grad) continue;
            auto& g = grad_of(*in);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
    });
}

template <class T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b)
{
    require_same_shape(a, b, "sub");
    std::vector<T> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
    return make_result<T>(a.shape(), std::move(out), "sub", {a.node(), b.node()}, [](Node<T>& self) {
        if (self.inputs[0]->requires_grad) {
            auto& g = grad_of(*self.inputs[0]);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
        if (self.inputs[1]->requires_grad) {
            auto& g = grad_of(*self.inputs[1]);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
        }
    });
}

template <class T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b)
{
    require_same_shape(a, b, "mul");
    std::vector<T> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
    return make_result<T>(a.shape(), std::move(out), "mul", {a.node(), b.node()}, [](Node<T>& self) {
        auto& x = *self.inputs[0];
        auto& y = *self.inputs[1];
        if (x.requires_grad) {
            auto& g = grad_of(x);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * y.value[i];
        }
        if (y.requires_grad) {
            auto& g = grad_of(y);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * x.value[i];
        }
    });
}

template <class T>
BasicTensor<T> scale(const BasicTensor<T>& a, T factor)
{
    std::vector<T> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * factor;
    return make_result<T>(a.shape(), std::move(out), "scale", {a.node()}, [factor](Node<T>& self) {
        auto& g = grad_of(*self.inputs[0]);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * factor;
    });
}

template <class T>
BasicTensor<T> sum(const BasicTensor<T>& a)
{
    double total = 0.0;
    for (auto v : a.values()) total += v;
    return make_result<T>(Shape{1}, {static_cast<T>(total)}, "sum", {a.node()}, [](Node<T>& self) {
        auto& g = grad_of(*self.inputs[0]);
        for (auto& v : g) v += self.grad[0];
    });
}

template <class T>
BasicTensor<T> mean(const BasicTensor<T>& a)
{
    double total = 0.0;
    for (auto v : a.values()) total += v;
    const double n = static_cast<double>(a.size());
    return make_result<T>(Shape{1}, {static_cast<T>(total / n)}, "mean", {a.node()}, [n](Node<T>& self) {
        auto& g = grad_of(*self.inputs[0]);
        const T share = static_cast<T>(self.grad[0] / n);
        for (auto& v : g) v += share;
    });
}

template <class T>
BasicTensor<T> reshape(const BasicTensor<T>& a, Shape shape)
{
    require(element_count(shape) == a.size(),
            "reshape: cannot view " + to_string(a.shape()) + " as " + to_string(shape));
    std::vector<T> out(a.values().begin(), a.values().end());
    return make_result<T>(std::move(shape), std::move(out), "reshape", {a.node()}, [](Node<T>& self) {
        auto& g = grad_of(*self.inputs[0]);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    });
}

template <class T>
BasicTensor<T> concat_columns(const BasicTensor<T>& left, const BasicTensor<T>& right)
{
    require(left.rank() == 2 && right.rank() == 2 && left.dim(0) == right.dim(0),
            "concat_columns: need N×p and N×q, got " + to_string(left.shape()) + " and " + to_string(right.shape()));
    const std::size_t n = left.dim(0), p = left.dim(1), q = right.dim(1);
    std::vector<T> out(n * (p + q));
    for (std::size_t i = 0; i < n; ++i) {
        std::copy_n(left.values().data() + i * p, p, out.data() + i * (p + q));
        std::copy_n(right.values().data() + i * q, q, out.data() + i * (p + q) + p);
    }
    return make_result<T>(Shape{n, p + q}, std::move(out), "concat_columns", {left.node(), right.node()},
                          [n, p, q](Node<T>& self) {
                              if (self.inputs[0]->requires_grad) {
                                  auto& g = grad_of(*self.inputs[0]);
                                  for (std::size_t i = 0; i < n; ++i)
                                      for (std::size_t j = 0; j < p; ++j) g[i * p + j] += self.grad[i * (p + q) + j];
                              }
                              if (self.inputs[1]->requires_grad) {
                                  auto& g = grad_of(*self.inputs[1]);
                                  for (std::size_t i = 0; i < n; ++i)
                                      for (std::size_t j = 0; j < q; ++j)
                                          g[i * q + j] += self.grad[i * (p + q) + p + j];
                              }
                          });
}

template <class T>
BasicTensor<T> concat_rows(const BasicTensor<T>& top, const BasicTensor<T>& bottom)
{
    require(top.rank() == bottom.rank() && top.rank() >= 1 &&
                std::equal(top.shape().begin() + 1, top.shape().end(), bottom.shape().begin() + 1),
            "concat_rows: trailing dimensions differ, " + to_string(top.shape()) + " vs " +
                to_string(bottom.shape()));
    Shape shape = top.shape();
    shape[0] += bottom.dim(0);
    std::vector<T> out;
    out.reserve(top.size() + bottom.size());
    out.insert(out.end(), top.values().begin(), top.values().end());
    out.insert(out.end(), bottom.values().begin(), bottom.values().end());
    const std::size_t split = top.size();
    return make_result<T>(std::move(shape), std::move(out), "concat_rows", {top.node(), bottom.node()},
                          [split](Node<T>& self) {
                              if (self.inputs[0]->requires_grad) {
                                  auto& g = grad_of(*self.inputs[0]);
                                  for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
                              }
                              if (self.inputs[1]->requires_grad) {
                                  auto& g = grad_of(*self.inputs[1]);
                                  for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[split + i];
                              }
                          });
}

template <class T>
BasicTensor<T> slice_rows(const BasicTensor<T>& a, std::size_t begin, std::size_t end)
{
    require(a.rank() >= 1 && begin < end && end <= a.dim(0),
            "slice_rows: range [" + std::to_string(begin) + ", " + std::to_string(end) + ") invalid for " +
                to_string(a.shape()));
    Shape shape = a.shape();
    const std::size_t row = a.size() / shape[0];
    shape[0] = end - begin;
    std::vector<T> out(a.values().begin() + begin * row, a.values().begin() + end * row);
    const std::size_t offset = begin * row;
    return make_result<T>(std::move(shape), std::move(out), "slice_rows", {a.node()}, [offset](Node<T>& self) {
        auto& g = grad_of(*self.inputs[0]);
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[offset + i] += self.grad[i];
    });
}

template <class T>
BasicTensor<T> relu(const BasicTensor<T>& a)
{
    return unary(
        a, "relu", [](T x) { return x > T(0) ? x : T(0); }, [](T x, T) { return x > T(0) ? T(1) : T(0); });
}

template <class T>
BasicTensor<T> tanh(const BasicTensor<T>& a)
{
    return unary(
        a, "tanh", [](T x) { return std::tanh(x); }, [](T, T y) { return T(1) - y * y; });
}

template <class T>
BasicTensor<T> sigmoid(const BasicTensor<T>& a)
{
    return unary(
        a, "sigmoid",
        [](T x) {
            if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
            const T e = std::exp(x);
            return e / (T(1) + e);
        },
        [](T, T y) { return y * (T(1) - y); });
}

template <class T>
BasicTensor<T> softmax(const BasicTensor<T>& a)
{
    require(a.rank() >= 1, "softmax: scalar input");
    const std::size_t k = a.shape().back();
    const std::size_t rows = a.size() / k;
    std::vector<T> out(a.size());
    auto in = a.values();
    for (std::size_t r = 0; r < rows; ++r) {
        const T* x = in.data() + r * k;
        T* y = out.data() + r * k;
        const T peak = *std::max_element(x, x + k);
        double total = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            y[j] = std::exp(x[j] - peak);
            total += y[j];
        }
        for (std::size_t j = 0; j < k; ++j) y[j] = static_cast<T>(y[j] / total);
    }
    return make_result<T>(a.shape(), std::move(out), "softmax", {a.node()}, [rows, k](Node<T>& self) {
        auto& g = grad_of(*self.inputs[0]);
        for (std::size_t r = 0; r < rows; ++r) {
            const T* y = self.value.data() + r * k;
            const T* dy = self.grad.data() + r * k;
            double dot = 0.0;
            for (std::size_t j = 0; j < k; ++j) dot += static_cast<double>(dy[j]) * y[j];
            for (std::size_t j = 0; j < k; ++j) g[r * k + j] += y[j] * static_cast<T>(dy[j] - dot);
        }
    });
}

template <class T>
BasicTensor<T> log_clipped(const BasicTensor<T>& a)
{
    const T eps = static_cast<T>(kLogEpsilon);
    return unary(
        a, "log_clipped", [eps](T x) { return std::log(std::clamp(x, eps, T(1))); },
        [eps](T x, T) { return (x >= eps && x <= T(1)) ? T(1) / x : T(0); });
}

template <class T>
BasicTensor<T> log1m_clipped(const BasicTensor<T>& a)
{
    const T eps = static_cast<T>(kLogEpsilon);
    return unary(
        a, "log1m_clipped", [eps](T x) { return std::log(std::clamp(T(1) - x, eps, T(1))); },
        [eps](T x, T) {
            const T u = T(1) - x;
            return (u >= eps && u <= T(1)) ? T(-1) / u : T(0);
        });
}

template <class T>
BasicTensor<T> dense(const BasicTensor<T>& input, const BasicTensor<T>& weight, const BasicTensor<T>& bias)
{
    require(input.rank() == 2 && weight.rank() == 2 && bias.rank() == 1,
            "dense: expected input N×in, weight out×in, bias out; got " + to_string(input.shape()) + ", " +
                to_string(weight.shape()) + ", " + to_string(bias.shape()));
    const std::size_t n = input.dim(0), in = input.dim(1), out = weight.dim(0);
    require(weight.dim(1) == in && bias.dim(0) == out,
            "dense: inner dimensions disagree, input " + to_string(input.shape()) + " weight " +
                to_string(weight.shape()) + " bias " + to_string(bias.shape()));
    std::vector<T> result(n * out);
    MatrixMap<T> y(result.data(), n, out);
    ConstMatrixMap<T> x(input.values().data(), n, in);
    ConstMatrixMap<T> w(weight.values().data(), out, in);
    y.noalias() = x * w.transpose();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < out; ++j) result[i * out + j] += bias[j];
    return make_result<T>(Shape{n, out}, std::move(result), "dense", {input.node(), weight.node(), bias.node()},
                          [n, in, out](Node<T>& self) {
                              auto& xn = *self.inputs[0];
                              auto& wn = *self.inputs[1];
                              auto& bn = *self.inputs[2];
                              ConstMatrixMap<T> gy(self.grad.data(), n, out);
                              if (xn.requires_grad) {
                                  MatrixMap<T> gx(grad_of(xn).data(), n, in);
                                  gx.noalias() += gy * ConstMatrixMap<T>(wn.value.data(), out, in);
                              }
                              if (wn.requires_grad) {
                                  MatrixMap<T> gw(grad_of(wn).data(), out, in);
                                  gw.noalias() += gy.transpose() * ConstMatrixMap<T>(xn.value.data(), n, in);
                              }
                              if (bn.requires_grad) {
                                  auto& gb = grad_of(bn);
                                  for (std::size_t i = 0; i < n; ++i)
                                      for (std::size_t j = 0; j < out; ++j) gb[j] += self.grad[i * out + j];
                              }
                          });
}

template <class T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& kernel, std::size_t stride,
                      std::size_t padding)
{
    require(input.rank() == 4 && kernel.rank() == 4,
            "conv2d: expected NCHW input and OIKK kernel, got " + to_string(input.shape()) + " and " +
                to_string(kernel.shape()));
    const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
    const std::size_t o = kernel.dim(0), k = kernel.dim(2);
    require(kernel.dim(1) == c, "conv2d: input has " + std::to_string(c) + " channels but kernel expects " +
                                    std::to_string(kernel.dim(1)));
    require(kernel.dim(3) == k, "conv2d: kernel must be square, got " + to_string(kernel.shape()));
    require(stride >= 1, "conv2d: stride must be at least 1");
    require(h + 2 * padding >= k && w + 2 * padding >= k,
            "conv2d: kernel " + std::to_string(k) + " larger than padded input " + to_string(input.shape()));
    const std::size_t oh = (h + 2 * padding - k) / stride + 1;
    const std::size_t ow = (w + 2 * padding - k) / stride + 1;
    const std::size_t ckk = c * k * k, cols_n = n * oh * ow;

    std::vector<T> cols(ckk * cols_n);
    im2col(input.values().data(), n, c, h, w, k, stride, padding, oh, ow, cols.data());
    std::vector<T> out_cm(o * cols_n);
    MatrixMap<T>(out_cm.data(), o, cols_n).noalias() =
        ConstMatrixMap<T>(kernel.values().data(), o, ckk) * MatrixMap<T>(cols.data(), ckk, cols_n);
    std::vector<T> out(n * o * oh * ow);
    channel_major_to_batch(out_cm.data(), n, o, oh * ow, out.data());

    return make_result<T>(
        Shape{n, o, oh, ow}, std::move(out), "conv2d", {input.node(), kernel.node()},
        [=](Node<T>& self) {
            auto& xn = *self.inputs[0];
            auto& kn = *self.inputs[1];
            std::vector<T> gy(o * cols_n);
            batch_to_channel_major(self.grad.data(), n, o, oh * ow, gy.data());
            ConstMatrixMap<T> gy_mat(gy.data(), o, cols_n);
            if (kn.requires_grad) {
                std::vector<T> cols(ckk * cols_n);
                im2col(xn.value.data(), n, c, h, w, k, stride, padding, oh, ow, cols.data());
                MatrixMap<T>(grad_of(kn).data(), o, ckk).noalias() +=
                    gy_mat * ConstMatrixMap<T>(cols.data(), ckk, cols_n).transpose();
            }
            if (xn.requires_grad) {
                std::vector<T> gcols(ckk * cols_n);
                MatrixMap<T>(gcols.data(), ckk, cols_n).noalias() =
                    ConstMatrixMap<T>(kn.value.data(), o, ckk).transpose() * gy_mat;
                col2im(gcols.data(), n, c, h, w, k, stride, padding, oh, ow, grad_of(xn).data());
            }
        });
}

template <class T>
BasicTensor<T> conv_transpose2d(const BasicTensor<T>& input, const BasicTensor<T>& kernel, std::size_t stride,
                                std::size_t padding)
{
    require(input.rank() == 4 && kernel.rank() == 4,
            "conv_transpose2d: expected NCHW input and (in, out, K, K) kernel, got " + to_string(input.shape()) +
                " and " + to_string(kernel.shape()));
    const std::size_t n = input.dim(0), ci = input.dim(1), h = input.dim(2), w = input.dim(3);
    const std::size_t co = kernel.dim(1), k = kernel.dim(2);
    require(kernel.dim(0) == ci, "conv_transpose2d: input has " + std::to_string(ci) +
                                     " channels but kernel expects " + std::to_string(kernel.dim(0)));
    require(kernel.dim(3) == k, "conv_transpose2d: kernel must be square, got " + to_string(kernel.shape()));
    require(stride >= 1, "conv_transpose2d: stride must be at least 1");
    const long oh_signed = static_cast<long>((h - 1) * stride + k) - 2 * static_cast<long>(padding);
    const long ow_signed = static_cast<long>((w - 1) * stride + k) - 2 * static_cast<long>(padding);
    require(oh_signed >= 1 && ow_signed >= 1, "conv_transpose2d: padding too large for " + to_string(input.shape()));
    const std::size_t oh = static_cast<std::size_t>(oh_signed), ow = static_cast<std::size_t>(ow_signed);
    const std::size_t cokk = co * k * k, cols_n = n * h * w;

    std::vector<T> x_cm(ci * cols_n);
    batch_to_channel_major(input.values().data(), n, ci, h * w, x_cm.data());
    std::vector<T> cols(cokk * cols_n);
    MatrixMap<T>(cols.data(), cokk, cols_n).noalias() =
        ConstMatrixMap<T>(kernel.values().data(), ci, cokk).transpose() * MatrixMap<T>(x_cm.data(), ci, cols_n);
    std::vector<T> out(n * co * oh * ow, T(0));
    col2im(cols.data(), n, co, oh, ow, k, stride, padding, h, w, out.data());

    return make_result<T>(
        Shape{n, co, oh, ow}, std::move(out), "conv_transpose2d", {input.node(), kernel.node()},
        [=, x_cm = std::move(x_cm)](Node<T>& self) {
            auto& xn = *self.inputs[0];
            auto& kn = *self.inputs[1];
            std::vector<T> gcols(cokk * cols_n);
            im2col(self.grad.data(), n, co, oh, ow, k, stride, padding, h, w, gcols.data());
            ConstMatrixMap<T> gcols_mat(gcols.data(), cokk, cols_n);
            if (kn.requires_grad) {
                MatrixMap<T>(grad_of(kn).data(), ci, cokk).noalias() +=
                    ConstMatrixMap<T>(x_cm.data(), ci, cols_n) * gcols_mat.transpose();
            }
            if (xn.requires_grad) {
                std::vector<T> gx_cm(ci * cols_n);
                MatrixMap<T>(gx_cm.data(), ci, cols_n).noalias() =
                    ConstMatrixMap<T>(kn.value.data(), ci, cokk) * gcols_mat;
                std::vector<T> gx(n * ci * h * w);
                channel_major_to_batch(gx_cm.data(), n, ci, h * w, gx.data());
                auto& g = grad_of(xn);
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += gx[i];
            }
        });
}

template <class T>
BasicTensor<T> add_channel_bias(const BasicTensor<T>& input, const BasicTensor<T>& bias)
{
    require(input.rank() >= 2 && bias.rank() == 1 && bias.dim(0) == input.dim(1),
            "add_channel_bias: bias " + to_string(bias.shape()) + " does not match channels of " +
                to_string(input.shape()));
    const std::size_t n = input.dim(0), c = input.dim(1), p = input.size() / (n * c);
    std::vector<T> out(input.values().begin(), input.values().end());
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t j = 0; j < p; ++j) out[(i * c + ch) * p + j] += bias[ch];
    return make_result<T>(input.shape(), std::move(out), "add_channel_bias", {input.node(), bias.node()},
                          [n, c, p](Node<T>& self) {
                              if (self.inputs[0]->requires_grad) {
                                  auto& g = grad_of(*self.inputs[0]);
                                  for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
                              }
                              if (self.inputs[1]->requires_grad) {
                                  auto& g = grad_of(*self.inputs[1]);
                                  for (std::size_t i = 0; i < n; ++i)
                                      for (std::size_t ch = 0; ch < c; ++ch)
                                          for (std::size_t j = 0; j < p; ++j)
                                              g[ch] += self.grad[(i * c + ch) * p + j];
                              }
                          });
}

template <class T>
BasicTensor<T> batchnorm(const BasicTensor<T>& input, const BasicTensor<T>& gamma, const BasicTensor<T>& beta,
                         BatchNormStats<T>& stats, Mode mode)
{
    require(input.rank() >= 2, "batchnorm: need at least N×C input, got " + to_string(input.shape()));
    const std::size_t n = input.dim(0), c = input.dim(1), p = input.size() / (n * c);
    require(gamma.rank() == 1 && beta.rank() == 1 && gamma.dim(0) == c && beta.dim(0) == c,
            "batchnorm: gamma/beta must have length " + std::to_string(c));
    require(stats.running_mean.defined() && stats.running_mean.size() == c && stats.running_var.size() == c,
            "batchnorm: running statistics must have length " + std::to_string(c));
    if (mode == Mode::train && n < 2)
        throw std::invalid_argument("batchnorm: train mode needs a batch of at least 2 (variance undefined)");

    const double m = static_cast<double>(n * p);
    const auto x = input.values();
    std::vector<T> xhat(input.size());
    std::vector<T> inv_std(c);
    std::vector<T> out(input.size());
    for (std::size_t ch = 0; ch < c; ++ch) {
        double mu, var;
        if (mode == Mode::train) {
            double s = 0.0;
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < p; ++j) s += x[(i * c + ch) * p + j];
            mu = s / m;
            double ss = 0.0;
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < p; ++j) {
                    const double d = x[(i * c + ch) * p + j] - mu;
                    ss += d * d;
                }
            var = ss / m;
            auto rm = stats.running_mean.mutable_values();
            auto rv = stats.running_var.mutable_values();
            rm[ch] = static_cast<T>(stats.momentum * rm[ch] + (1.0 - stats.momentum) * mu);
            rv[ch] = static_cast<T>(stats.momentum * rv[ch] + (1.0 - stats.momentum) * ss / (m - 1.0));
        } else {
            mu = stats.running_mean[ch];
            var = stats.running_var[ch];
        }
        const double is = 1.0 / std::sqrt(var + stats.epsilon);
        inv_std[ch] = static_cast<T>(is);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < p; ++j) {
                const std::size_t idx = (i * c + ch) * p + j;
                xhat[idx] = static_cast<T>((x[idx] - mu) * is);
                out[idx] = gamma[ch] * xhat[idx] + beta[ch];
            }
    }

    const bool train = mode == Mode::train;
    return make_result<T>(
        input.shape(), std::move(out), "batchnorm", {input.node(), gamma.node(), beta.node()},
        [=, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node<T>& self) {
            auto& xn = *self.inputs[0];
            auto& gn = *self.inputs[1];
            auto& bn = *self.inputs[2];
            const auto& dy = self.grad;
            for (std::size_t ch = 0; ch < c; ++ch) {
                double sum_dy = 0.0, sum_dy_xhat = 0.0;
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = 0; j < p; ++j) {
                        const std::size_t idx = (i * c + ch) * p + j;
                        sum_dy += dy[idx];
                        sum_dy_xhat += static_cast<double>(dy[idx]) * xhat[idx];
                    }
                if (gn.requires_grad) grad_of(gn)[ch] += static_cast<T>(sum_dy_xhat);
                if (bn.requires_grad) grad_of(bn)[ch] += static_cast<T>(sum_dy);
                if (!xn.requires_grad) continue;
                auto& gx = grad_of(xn);
                const double scale_ch = static_cast<double>(gn.value[ch]) * inv_std[ch];
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = 0; j < p; ++j) {
                        const std::size_t idx = (i * c + ch) * p + j;
                        if (train)
                            gx[idx] += static_cast<T>(scale_ch / m * (m * dy[idx] - sum_dy - xhat[idx] * sum_dy_xhat));
                        else
                            gx[idx] += static_cast<T>(scale_ch * dy[idx]);
                    }
            }
        });
}

template <class T>
BasicTensor<T> cross_entropy(const BasicTensor<T>& pred, const BasicTensor<T>& target)
{
    require_same_shape(pred, target, "cross_entropy");
    require(pred.rank() == 2, "cross_entropy: expected N×K probabilities, got " + to_string(pred.shape()));
    const std::size_t n = pred.dim(0), k = pred.dim(1);
    for (std::size_t i = 0; i < n; ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < k; ++j) row += pred[i * k + j];
        if (std::abs(row - 1.0) > 1e-4)
            throw std::domain_error("cross_entropy: prediction row " + std::to_string(i) + " sums to " +
                                    std::to_string(row) + ", not 1");
    }
    const T eps = static_cast<T>(kLogEpsilon);
    double total = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i)
        total -= static_cast<double>(target[i]) * std::log(std::clamp(pred[i], eps, T(1)));
    return make_result<T>(Shape{1}, {static_cast<T>(total / n)}, "cross_entropy", {pred.node(), target.node()},
                          [n, eps](Node<T>& self) {
                              auto& pn = *self.inputs[0];
                              auto& tn = *self.inputs[1];
                              const T g0 = self.grad[0] / static_cast<T>(n);
                              if (pn.requires_grad) {
                                  auto& g = grad_of(pn);
                                  for (std::size_t i = 0; i < g.size(); ++i) {
                                      const T p = pn.value[i];
                                      if (p >= eps && p <= T(1)) g[i] -= g0 * tn.value[i] / p;
                                  }
                              }
                              if (tn.requires_grad) {
                                  auto& g = grad_of(tn);
                                  for (std::size_t i = 0; i < g.size(); ++i)
                                      g[i] -= g0 * std::log(std::clamp(pn.value[i], eps, T(1)));
                              }
                          });
}

template <class T>
BasicTensor<T> mse(const BasicTensor<T>& a, const BasicTensor<T>& b)
{
    require_same_shape(a, b, "mse");
    double total = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - b[i];
        total += d * d;
    }
    const double count = static_cast<double>(a.size());
    return make_result<T>(Shape{1}, {static_cast<T>(total / count)}, "mse", {a.node(), b.node()},
                          [count](Node<T>& self) {
                              auto& an = *self.inputs[0];
                              auto& bn = *self.inputs[1];
                              const T f = static_cast<T>(2.0 * self.grad[0] / count);
                              if (an.requires_grad) {
                                  auto& g = grad_of(an);
                                  for (std::size_t i = 0; i < g.size(); ++i) g[i] += f * (an.value[i] - bn.value[i]);
                              }
                              if (bn.requires_grad) {
                                  auto& g = grad_of(bn);
                                  for (std::size_t i = 0; i < g.size(); ++i) g[i] -= f * (an.value[i] - bn.value[i]);
                              }
                          });
}

template <class T>
BasicTensor<T> one_hot(std::span<const int> labels, std::size_t categories)
{
    if (labels.empty()) throw DimensionError("one_hot: empty label list");
    std::vector<T> out(labels.size() * categories, T(0));
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= categories)
            throw std::out_of_range("label " + std::to_string(labels[i]) + " outside [0, " +
                                    std::to_string(categories) + ")");
        out[i * categories + static_cast<std::size_t>(labels[i])] = T(1);
    }
    return BasicTensor<T>(Shape{labels.size(), categories}, std::move(out));
}

#define CDAAE_INSTANTIATE_OPS(T)                                                                                 \
    template BasicTensor<T> add(const BasicTensor<T>&, const BasicTensor<T>&);                                  \
    template BasicTensor<T> sub(const BasicTensor<T>&, const BasicTensor<T>&);                                  \
    template BasicTensor<T> mul(const BasicTensor<T>&, const BasicTensor<T>&);                                  \
    template BasicTensor<T> scale(const BasicTensor<T>&, T);                                                    \
    template BasicTensor<T> sum(const BasicTensor<T>&);                                                         \
    template BasicTensor<T> mean(const BasicTensor<T>&);                                                        \
    template BasicTensor<T> reshape(const BasicTensor<T>&, Shape);                                              \
    template BasicTensor<T> concat_columns(const BasicTensor<T>&, const BasicTensor<T>&);                       \
    template BasicTensor<T> concat_rows(const BasicTensor<T>&, const BasicTensor<T>&);                          \
    template BasicTensor<T> slice_rows(const BasicTensor<T>&, std::size_t, std::size_t);                        \
    template BasicTensor<T> relu(const BasicTensor<T>&);                                                        \
    template BasicTensor<T> tanh(const BasicTensor<T>&);                                                        \
    template BasicTensor<T> sigmoid(const BasicTensor<T>&);                                                     \
    template BasicTensor<T> softmax(const BasicTensor<T>&);                                                     \
    template BasicTensor<T> log_clipped(const BasicTensor<T>&);                                                 \
    template BasicTensor<T> log1m_clipped(const BasicTensor<T>&);                                               \
    template BasicTensor<T> dense(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&);         \
    template BasicTensor<T> conv2d(const BasicTensor<T>&, const BasicTensor<T>&, std::size_t, std::size_t);     \
    template BasicTensor<T> conv_transpose2d(const BasicTensor<T>&, const BasicTensor<T>&, std::size_t,         \
                                             std::size_t);                                                      \
    template BasicTensor<T> add_channel_bias(const BasicTensor<T>&, const BasicTensor<T>&);                     \
    template BasicTensor<T> batchnorm(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&,      \
                                      BatchNormStats<T>&, Mode);                                                \
    template BasicTensor<T> cross_entropy(const BasicTensor<T>&, const BasicTensor<T>&);                        \
    template BasicTensor<T> mse(const BasicTensor<T>&, const BasicTensor<T>&);                                  \
    template BasicTensor<T> one_hot<T>(std::span<const int>, std::size_t);

CDAAE_INSTANTIATE_OPS(float)
CDAAE_INSTANTIATE_OPS(double)

#undef CDAAE_INSTANTIATE_OPS

} // namespace cdaae
