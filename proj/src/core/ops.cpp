#include "ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include <cblas.h>

namespace ivusseg::ops {

namespace {

// Cap on the im2col scratch buffer (doubles). Large layers are processed in
// bands of output rows so a 384x384 conv never materializes the full column
// matrix (which would be ~680 MB for the widest layer).
constexpr std::size_t kColBudget = 6u << 20;

struct ConvDims {
    int n, cin, h, w;
    int cout, kh, kw;
    int stride, pad_h, pad_w;
    int oh, ow;
};

ConvDims conv_dims(const Tensor& input, const Tensor& kernel, int stride, Padding pad) {
    if (input.rank() != 4)
        throw DimError("conv2d: input must be 4-axis (N,C,H,W), got " + input.shape_str());
    if (kernel.rank() != 4)
        throw DimError("conv2d: kernel must be 4-axis (Cout,Cin,kH,kW), got " + kernel.shape_str());
    ConvDims d{};
    d.n = input.dim(0);
    d.cin = input.dim(1);
    d.h = input.dim(2);
    d.w = input.dim(3);
    d.cout = kernel.dim(0);
    d.kh = kernel.dim(2);
    d.kw = kernel.dim(3);
    if (kernel.dim(1) != d.cin)
        throw DimError("conv2d: kernel input-channel axis is " + std::to_string(kernel.dim(1)) +
                       " but input has " + std::to_string(d.cin) + " channels");
    if (d.kh % 2 == 0 || d.kw % 2 == 0)
        throw DimError("conv2d: kernel height/width must be odd, got " +
                       std::to_string(d.kh) + "x" + std::to_string(d.kw));
    if (stride < 1)
        throw DimError("conv2d: stride must be >= 1, got " + std::to_string(stride));
    d.stride = stride;
    if (pad == Padding::same) {
        d.pad_h = (d.kh - 1) / 2;
        d.pad_w = (d.kw - 1) / 2;
    } else {
        d.pad_h = d.pad_w = 0;
        if (d.h < d.kh || d.w < d.kw)
            throw DimError("conv2d: valid padding needs input height/width >= kernel, got " +
                           input.shape_str() + " vs kernel " + kernel.shape_str());
    }
    d.oh = (d.h + 2 * d.pad_h - d.kh) / stride + 1;
    d.ow = (d.w + 2 * d.pad_w - d.kw) / stride + 1;
    return d;
}

// Fill `col` (rows = Cin*kH*kW, cols = rows_in_band*OW) for output rows
// [oy0, oy1) of one image.
void im2col_band(const double* img, const ConvDims& d, int oy0, int oy1, double* col) {
    const int band = (oy1 - oy0) * d.ow;
    for (int ci = 0; ci < d.cin; ++ci) {
        const double* plane = img + static_cast<std::size_t>(ci) * d.h * d.w;
        for (int ky = 0; ky < d.kh; ++ky) {
            for (int kx = 0; kx < d.kw; ++kx) {
                double* row = col + (static_cast<std::size_t>(ci) * d.kh * d.kw +
                                     ky * d.kw + kx) * band;
                for (int oy = oy0; oy < oy1; ++oy) {
                    const int iy = oy * d.stride + ky - d.pad_h;
                    double* dst = row + static_cast<std::size_t>(oy - oy0) * d.ow;
                    if (iy < 0 || iy >= d.h) {
                        std::memset(dst, 0, sizeof(double) * d.ow);
                        continue;
                    }
                    const double* src = plane + static_cast<std::size_t>(iy) * d.w;
                    for (int ox = 0; ox < d.ow; ++ox) {
                        const int ix = ox * d.stride + kx - d.pad_w;
                        dst[ox] = (ix >= 0 && ix < d.w) ? src[ix] : 0.0;
                    }
                }
            }
        }
    }
}

// Scatter-add a column band back into the input gradient image.
void col2im_band(const double* col, const ConvDims& d, int oy0, int oy1, double* gimg) {
    const int band = (oy1 - oy0) * d.ow;
    for (int ci = 0; ci < d.cin; ++ci) {
        double* plane = gimg + static_cast<std::size_t>(ci) * d.h * d.w;
        for (int ky = 0; ky < d.kh; ++ky) {
            for (int kx = 0; kx < d.kw; ++kx) {
                const double* row = col + (static_cast<std::size_t>(ci) * d.kh * d.kw +
                                           ky * d.kw + kx) * band;
                for (int oy = oy0; oy < oy1; ++oy) {
                    const int iy = oy * d.stride + ky - d.pad_h;
                    if (iy < 0 || iy >= d.h) continue;
                    const double* src = row + static_cast<std::size_t>(oy - oy0) * d.ow;
                    double* dst = plane + static_cast<std::size_t>(iy) * d.w;
                    for (int ox = 0; ox < d.ow; ++ox) {
                        const int ix = ox * d.stride + kx - d.pad_w;
                        if (ix >= 0 && ix < d.w) dst[ix] += src[ox];
                    }
                }
            }
        }
    }
}

int band_rows(const ConvDims& d) {
    const std::size_t per_row = static_cast<std::size_t>(d.cin) * d.kh * d.kw * d.ow;
    int rows = per_row ? static_cast<int>(kColBudget / per_row) : d.oh;
    return std::clamp(rows, 1, d.oh);
}

} // namespace

int conv_out_dim(int in, int kernel, int stride, Padding pad) {
    const int p = pad == Padding::same ? (kernel - 1) / 2 : 0;
    return (in + 2 * p - kernel) / stride + 1;
}

Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
              int stride, Padding pad) {
    const ConvDims d = conv_dims(input, kernel, stride, pad);
    if (bias.numel() != static_cast<std::size_t>(d.cout))
        throw DimError("conv2d: bias has " + std::to_string(bias.numel()) +
                       " values but kernel has " + std::to_string(d.cout) + " output channels");

    Tensor out({d.n, d.cout, d.oh, d.ow});
    const int ck = d.cin * d.kh * d.kw;
    const int rows = band_rows(d);
    std::vector<double> col(static_cast<std::size_t>(ck) * rows * d.ow);

    const std::size_t in_plane = static_cast<std::size_t>(d.cin) * d.h * d.w;
    const std::size_t out_plane = static_cast<std::size_t>(d.cout) * d.oh * d.ow;
    for (int n = 0; n < d.n; ++n) {
        const double* img = input.data() + n * in_plane;
        double* dst = out.data() + n * out_plane;
        for (int oy0 = 0; oy0 < d.oh; oy0 += rows) {
            const int oy1 = std::min(oy0 + rows, d.oh);
            const int cols = (oy1 - oy0) * d.ow;
            im2col_band(img, d, oy0, oy1, col.data());
            cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans,
                        d.cout, cols, ck, 1.0,
                        kernel.data(), ck,
                        col.data(), cols,
                        0.0, dst + static_cast<std::size_t>(oy0) * d.ow,
                        d.oh * d.ow);
        }
        for (int co = 0; co < d.cout; ++co) {
            double* plane = dst + static_cast<std::size_t>(co) * d.oh * d.ow;
            const double b = bias[co];
            for (int i = 0; i < d.oh * d.ow; ++i) plane[i] += b;
        }
    }
    return out;
}

void conv2d_backward(const Tensor& input, const Tensor& kernel, const Tensor& grad_out,
                     int stride, Padding pad,
                     Tensor* grad_input, Tensor* grad_kernel, Tensor* grad_bias) {
    const ConvDims d = conv_dims(input, kernel, stride, pad);
    if (grad_out.rank() != 4 || grad_out.dim(0) != d.n || grad_out.dim(1) != d.cout ||
        grad_out.dim(2) != d.oh || grad_out.dim(3) != d.ow)
        throw DimError("conv2d_backward: upstream gradient " + grad_out.shape_str() +
                       " does not match output shape");

    if (grad_input) *grad_input = Tensor(input.shape());
    if (grad_kernel) *grad_kernel = Tensor(kernel.shape());
    if (grad_bias) *grad_bias = Tensor({d.cout});

    const int ck = d.cin * d.kh * d.kw;
    const int rows = band_rows(d);
    std::vector<double> col(static_cast<std::size_t>(ck) * rows * d.ow);
    std::vector<double> gcol;
    if (grad_input) gcol.resize(col.size());

    const std::size_t in_plane = static_cast<std::size_t>(d.cin) * d.h * d.w;
    const std::size_t out_plane = static_cast<std::size_t>(d.cout) * d.oh * d.ow;
    for (int n = 0; n < d.n; ++n) {
        const double* img = input.data() + n * in_plane;
        const double* gy = grad_out.data() + n * out_plane;
        for (int oy0 = 0; oy0 < d.oh; oy0 += rows) {
            const int oy1 = std::min(oy0 + rows, d.oh);
            const int cols = (oy1 - oy0) * d.ow;
            const double* gy_band = gy + static_cast<std::size_t>(oy0) * d.ow;
            if (grad_kernel) {
                im2col_band(img, d, oy0, oy1, col.data());
                cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans,
                            d.cout, ck, cols, 1.0,
                            gy_band, d.oh * d.ow,
                            col.data(), cols,
                            1.0, grad_kernel->data(), ck);
            }
            if (grad_input) {
                cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans,
                            ck, cols, d.cout, 1.0,
                            kernel.data(), ck,
                            gy_band, d.oh * d.ow,
                            0.0, gcol.data(), cols);
                col2im_band(gcol.data(), d, oy0, oy1,
                            grad_input->data() + n * in_plane);
            }
        }
        if (grad_bias) {
            for (int co = 0; co < d.cout; ++co) {
                const double* plane = gy + static_cast<std::size_t>(co) * d.oh * d.ow;
                double s = 0.0;
                for (int i = 0; i < d.oh * d.ow; ++i) s += plane[i];
                (*grad_bias)[co] += s;
            }
        }
    }
}

Tensor maxpool2(const Tensor& input, std::vector<std::int64_t>* argmax) {
    if (input.rank() != 4)
        throw DimError("maxpool2: input must be 4-axis, got " + input.shape_str());
    const int n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
    if (h % 2 != 0 || w % 2 != 0)
        throw DimError("maxpool2: height and width must be even (pad or resize the input), got " +
                       input.shape_str());
    Tensor out({n, c, h / 2, w / 2});
    if (argmax) argmax->assign(out.numel(), 0);

    const double* src = input.data();
    double* dst = out.data();
    std::size_t o = 0;
    for (int p = 0; p < n * c; ++p) {
        const std::size_t base = static_cast<std::size_t>(p) * h * w;
        for (int y = 0; y < h; y += 2) {
            for (int x = 0; x < w; x += 2, ++o) {
                std::size_t best = base + static_cast<std::size_t>(y) * w + x;
                double bv = src[best];
                const std::size_t cand[3] = {best + 1, best + w, best + w + 1};
                for (std::size_t idx : cand) {
                    if (src[idx] > bv) {  // strict: first index wins ties
                        bv = src[idx];
                        best = idx;
                    }
                }
                dst[o] = bv;
                if (argmax) (*argmax)[o] = static_cast<std::int64_t>(best);
            }
        }
    }
    return out;
}

Tensor maxpool2_backward(const Tensor& grad_out, const std::vector<std::int64_t>& argmax,
                         const std::vector<int>& input_shape) {
    Tensor gx(input_shape);
    if (argmax.size() != grad_out.numel())
        throw DimError("maxpool2_backward: argmax size does not match gradient");
    for (std::size_t i = 0; i < argmax.size(); ++i)
        gx[static_cast<std::size_t>(argmax[i])] += grad_out[i];
    return gx;
}

Tensor upsample2_nearest(const Tensor& input) {
    if (input.rank() != 4)
        throw DimError("upsample2_nearest: input must be 4-axis, got " + input.shape_str());
    const int n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
    Tensor out({n, c, 2 * h, 2 * w});
    const double* src = input.data();
    double* dst = out.data();
    for (int p = 0; p < n * c; ++p) {
        const double* sp = src + static_cast<std::size_t>(p) * h * w;
        double* dp = dst + static_cast<std::size_t>(p) * 4 * h * w;
        for (int y = 0; y < h; ++y) {
            double* row0 = dp + static_cast<std::size_t>(2 * y) * 2 * w;
            double* row1 = row0 + 2 * w;
            for (int x = 0; x < w; ++x) {
                const double v = sp[static_cast<std::size_t>(y) * w + x];
                row0[2 * x] = row0[2 * x + 1] = v;
                row1[2 * x] = row1[2 * x + 1] = v;
            }
        }
    }
    return out;
}

Tensor upsample2_backward(const Tensor& grad_out) {
    if (grad_out.rank() != 4)
        throw DimError("upsample2_backward: gradient must be 4-axis");
    const int n = grad_out.dim(0), c = grad_out.dim(1);
    const int oh = grad_out.dim(2), ow = grad_out.dim(3);
    if (oh % 2 != 0 || ow % 2 != 0)
        throw DimError("upsample2_backward: gradient height/width must be even");
    Tensor gx({n, c, oh / 2, ow / 2});
    const double* gp = grad_out.data();
    double* dp = gx.data();
    for (int p = 0; p < n * c; ++p) {
        const double* g = gp + static_cast<std::size_t>(p) * oh * ow;
        double* d = dp + static_cast<std::size_t>(p) * (oh / 2) * (ow / 2);
        for (int y = 0; y < oh / 2; ++y) {
            const double* r0 = g + static_cast<std::size_t>(2 * y) * ow;
            const double* r1 = r0 + ow;
            for (int x = 0; x < ow / 2; ++x)
                d[static_cast<std::size_t>(y) * (ow / 2) + x] =
                    r0[2 * x] + r0[2 * x + 1] + r1[2 * x] + r1[2 * x + 1];
        }
    }
    return gx;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    if (a.rank() != 4 || b.rank() != 4)
        throw DimError("concat_channels: both inputs must be 4-axis, got " +
                       a.shape_str() + " and " + b.shape_str());
    for (int axis : {0, 2, 3}) {
        if (a.shape()[axis] != b.shape()[axis]) {
            static const char* names[] = {"batch", "channel", "height", "width"};
            throw DimError(std::string("concat_channels: mismatch on ") + names[axis] +
                           " axis, " + a.shape_str() + " vs " + b.shape_str());
        }
    }
    const int n = a.dim(0), ca = a.dim(1), cb = b.dim(1), h = a.dim(2), w = a.dim(3);
    Tensor out({n, ca + cb, h, w});
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    for (int i = 0; i < n; ++i) {
        std::memcpy(out.data() + (static_cast<std::size_t>(i) * (ca + cb)) * plane,
                    a.data() + (static_cast<std::size_t>(i) * ca) * plane,
                    sizeof(double) * ca * plane);
        std::memcpy(out.data() + (static_cast<std::size_t>(i) * (ca + cb) + ca) * plane,
                    b.data() + (static_cast<std::size_t>(i) * cb) * plane,
                    sizeof(double) * cb * plane);
    }
    return out;
}

void concat_backward(const Tensor& grad_out, int ca, Tensor* grad_a, Tensor* grad_b) {
    const int c = grad_out.dim(1);
    if (grad_a) *grad_a = slice_channels(grad_out, 0, ca);
    if (grad_b) *grad_b = slice_channels(grad_out, ca, c - ca);
}

Tensor slice_channels(const Tensor& t, int first, int count) {
    if (t.rank() != 4)
        throw DimError("slice_channels: input must be 4-axis");
    const int n = t.dim(0), c = t.dim(1), h = t.dim(2), w = t.dim(3);
    if (first < 0 || count < 0 || first + count > c)
        throw DimError("slice_channels: range [" + std::to_string(first) + ", " +
                       std::to_string(first + count) + ") exceeds " + std::to_string(c) +
                       " channels");
    Tensor out({n, count, h, w});
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    for (int i = 0; i < n; ++i)
        std::memcpy(out.data() + (static_cast<std::size_t>(i) * count) * plane,
                    t.data() + (static_cast<std::size_t>(i) * c + first) * plane,
                    sizeof(double) * count * plane);
    return out;
}

namespace {

int alpha_channels(const Tensor& input, const Tensor& alpha) {
    const std::size_t a = alpha.numel();
    if (a == 1) return 1;
    if (input.rank() == 4 && a == static_cast<std::size_t>(input.dim(1)))
        return static_cast<int>(a);
    throw DimError("prelu: alpha must be scalar or one value per channel, got " +
                   std::to_string(a) + " values for input " + input.shape_str());
}

} // namespace

Tensor prelu(const Tensor& input, const Tensor& alpha) {
    const int ac = alpha_channels(input, alpha);
    Tensor out(input.shape());
    if (ac == 1) {
        const double a = alpha[0];
        for (std::size_t i = 0; i < input.numel(); ++i) {
            const double x = input[i];
            out[i] = x > 0.0 ? x : a * x;
        }
        return out;
    }
    const int n = input.dim(0), c = input.dim(1);
    const std::size_t plane = input.numel() / (static_cast<std::size_t>(n) * c);
    std::size_t i = 0;
    for (int b = 0; b < n; ++b)
        for (int ch = 0; ch < c; ++ch) {
            const double a = alpha[ch];
            for (std::size_t k = 0; k < plane; ++k, ++i) {
                const double x = input[i];
                out[i] = x > 0.0 ? x : a * x;
            }
        }
    return out;
}

void prelu_backward(const Tensor& input, const Tensor& alpha, const Tensor& grad_out,
                    Tensor* grad_input, Tensor* grad_alpha) {
    require_same_shape(input, grad_out, "prelu_backward");
    const int ac = alpha_channels(input, alpha);
    if (grad_input) *grad_input = Tensor(input.shape());
    if (grad_alpha) *grad_alpha = Tensor(alpha.shape());
    if (ac == 1) {
        const double a = alpha[0];
        double ga = 0.0;
        for (std::size_t i = 0; i < input.numel(); ++i) {
            const double x = input[i], g = grad_out[i];
            if (grad_input) (*grad_input)[i] = x > 0.0 ? g : a * g;
            if (x <= 0.0) ga += g * x;
        }
        if (grad_alpha) (*grad_alpha)[0] = ga;
        return;
    }
    const int n = input.dim(0), c = input.dim(1);
    const std::size_t plane = input.numel() / (static_cast<std::size_t>(n) * c);
    std::size_t i = 0;
    for (int b = 0; b < n; ++b)
        for (int ch = 0; ch < c; ++ch) {
            const double a = alpha[ch];
            double ga = 0.0;
            for (std::size_t k = 0; k < plane; ++k, ++i) {
                const double x = input[i], g = grad_out[i];
                if (grad_input) (*grad_input)[i] = x > 0.0 ? g : a * g;
                if (x <= 0.0) ga += g * x;
            }
            if (grad_alpha) (*grad_alpha)[ch] += ga;
        }
}

Tensor sigmoid(const Tensor& input) {
    Tensor out(input.shape());
    for (std::size_t i = 0; i < input.numel(); ++i) {
        const double x = input[i];
        if (x >= 0.0) {
            out[i] = 1.0 / (1.0 + std::exp(-x));
        } else {
            const double e = std::exp(x);
            out[i] = e / (1.0 + e);
        }
    }
    return out;
}

Tensor sigmoid_backward(const Tensor& output, const Tensor& grad_out) {
    require_same_shape(output, grad_out, "sigmoid_backward");
    Tensor gx(output.shape());
    for (std::size_t i = 0; i < output.numel(); ++i) {
        const double y = output[i];
        gx[i] = grad_out[i] * y * (1.0 - y);
    }
    return gx;
}

} // namespace ivusseg::ops
