#include "hscat/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace hscat::metrics {

namespace {

template <typename F>
double masked_reduce(const DenseGrid& pred, const DenseGrid& gt, const OccupancyMask& mask, F f) {
    if (!(pred.shape() == gt.shape()) || !(gt.shape() == mask.shape()))
        throw ShapeError("masked metric: shape mismatch");
    double s = 0.0;
    std::size_t count = 0;
    for (std::size_t n = 0; n < pred.size(); ++n) {
        if (!mask[n]) continue;
        s += f(pred[n] - gt[n]);
        ++count;
    }
    if (count == 0) throw ConfigError("masked metric: empty mask");
    return s / double(count);
}

struct Plane {
    int w = 0, h = 0;
    std::vector<double> v;
    double at(int y, int x) const {
        return v[std::size_t(std::clamp(y, 0, h - 1)) * w + std::size_t(std::clamp(x, 0, w - 1))];
    }
};

std::vector<double> gaussian_window() {
    std::vector<double> g(11);
    double s = 0.0;
    for (int n = 0; n < 11; ++n) {
        const double d = n - 5;
        g[std::size_t(n)] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
        s += g[std::size_t(n)];
    }
    for (double& x : g) x /= s;
    return g;
}

Plane blur(const Plane& p) {
    static const std::vector<double> g = gaussian_window();
    Plane tmp{p.w, p.h, std::vector<double>(p.v.size())};
    for (int y = 0; y < p.h; ++y)
        for (int x = 0; x < p.w; ++x) {
            double s = 0.0;
            for (int n = 0; n < 11; ++n) s += g[std::size_t(n)] * p.at(y, x + n - 5);
            tmp.v[std::size_t(y) * p.w + x] = s;
        }
    Plane out{p.w, p.h, std::vector<double>(p.v.size())};
    for (int y = 0; y < p.h; ++y)
        for (int x = 0; x < p.w; ++x) {
            double s = 0.0;
            for (int n = 0; n < 11; ++n) s += g[std::size_t(n)] * tmp.at(y + n - 5, x);
            out.v[std::size_t(y) * p.w + x] = s;
        }
    return out;
}

Plane product(const Plane& a, const Plane& b) {
    Plane o{a.w, a.h, std::vector<double>(a.v.size())};
    for (std::size_t n = 0; n < a.v.size(); ++n) o.v[n] = a.v[n] * b.v[n];
    return o;
}

Plane downsample(const Plane& p) {
    Plane o{std::max(1, p.w / 2), std::max(1, p.h / 2), {}};
    o.v.resize(std::size_t(o.w) * o.h);
    for (int y = 0; y < o.h; ++y)
        for (int x = 0; x < o.w; ++x)
            o.v[std::size_t(y) * o.w + x] =
                0.25 * (p.at(2 * y, 2 * x) + p.at(2 * y, 2 * x + 1) + p.at(2 * y + 1, 2 * x) + p.at(2 * y + 1, 2 * x + 1));
    return o;
}

// Mean luminance and contrast-structure terms of one scale.
void ssim_terms(const Plane& a, const Plane& b, double c1, double c2, double& lum, double& cs) {
    const Plane ma = blur(a), mb = blur(b);
    const Plane saa = blur(product(a, a)), sbb = blur(product(b, b)), sab = blur(product(a, b));
    double l_sum = 0.0, cs_sum = 0.0;
    for (std::size_t n = 0; n < a.v.size(); ++n) {
        const double mu_a = ma.v[n], mu_b = mb.v[n];
        const double va = saa.v[n] - mu_a * mu_a;
        const double vb = sbb.v[n] - mu_b * mu_b;
        const double cov = sab.v[n] - mu_a * mu_b;
        const double l = (2.0 * mu_a * mu_b + c1) / (mu_a * mu_a + mu_b * mu_b + c1);
        const double c = (2.0 * cov + c2) / (va + vb + c2);
        l_sum += l * c;
        cs_sum += c;
    }
    lum = l_sum / double(a.v.size());  // full SSIM at this scale
    cs = cs_sum / double(a.v.size());
}

}  // namespace

double masked_mae(const DenseGrid& pred, const DenseGrid& gt, const OccupancyMask& mask) {
    return masked_reduce(pred, gt, mask, [](double d) { return std::abs(d); });
}

double masked_mse(const DenseGrid& pred, const DenseGrid& gt, const OccupancyMask& mask) {
    return masked_reduce(pred, gt, mask, [](double d) { return d * d; });
}

double image_mse(const Image& a, const Image& b) {
    if (!a.same_layout(b)) throw ShapeError("image_mse: layout mismatch");
    double s = 0.0;
    for (std::size_t n = 0; n < a.data.size(); ++n) s += (a.data[n] - b.data[n]) * (a.data[n] - b.data[n]);
    return s / double(a.data.size());
}

MsSsimResult ms_ssim_detail(const Image& a, const Image& b) {
    if (!a.same_layout(b)) throw ShapeError("ms_ssim: layout mismatch");
    double range = 0.0;
    for (double v : a.data) range = std::max(range, v);
    for (double v : b.data) range = std::max(range, v);
    if (!(range > 0.0)) range = 1.0;
    const double c1 = (0.01 * range) * (0.01 * range);
    const double c2 = (0.03 * range) * (0.03 * range);

    int scales = 1;
    const int side = std::min(a.width, a.height);
    while (scales < 5 && (side >> scales) >= 2) ++scales;
    MsSsimResult res;
    res.scales = scales;
    res.reduced_scales = scales < 5;
    double wsum = 0.0;
    for (int s = 0; s < scales; ++s) wsum += kMsSsimWeights[std::size_t(s)];

    double total = 0.0;
    for (int c = 0; c < a.channels; ++c) {
        Plane pa{a.width, a.height, {}}, pb{b.width, b.height, {}};
        pa.v.assign(a.data.begin() + std::ptrdiff_t(c * a.pixels()), a.data.begin() + std::ptrdiff_t((c + 1) * a.pixels()));
        pb.v.assign(b.data.begin() + std::ptrdiff_t(c * b.pixels()), b.data.begin() + std::ptrdiff_t((c + 1) * b.pixels()));
        double value = 1.0;
        for (int s = 0; s < scales; ++s) {
            double ssim = 0.0, cs = 0.0;
            ssim_terms(pa, pb, c1, c2, ssim, cs);
            const double w = kMsSsimWeights[std::size_t(s)] / wsum;
            const double term = s == scales - 1 ? ssim : cs;
            value *= std::pow(std::max(term, 0.0), w);
            if (s + 1 < scales) {
                pa = downsample(pa);
                pb = downsample(pb);
            }
        }
        total += value;
    }
    res.value = total / a.channels;
    return res;
}

double ms_ssim(const Image& a, const Image& b) { return ms_ssim_detail(a, b).value; }

}  // namespace hscat::metrics
