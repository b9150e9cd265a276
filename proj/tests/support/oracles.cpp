#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

namespace testsupport {

std::vector<double> central_diff(const std::function<double(const std::vector<double>&)>& f,
                                 const std::vector<double>& x, double h) {
    std::vector<double> g(x.size());
    std::vector<double> p = x;
    for (size_t i = 0; i < x.size(); ++i) {
        p[i] = x[i] + h;
        const double up = f(p);
        p[i] = x[i] - h;
        const double dn = f(p);
        p[i] = x[i];
        g[i] = (up - dn) / (2.0 * h);
    }
    return g;
}

double max_rel_err(const std::vector<double>& a, const std::vector<double>& b) {
    double worst = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double scale = std::max({1.0, std::fabs(a[i]), std::fabs(b[i])});
        worst = std::max(worst, std::fabs(a[i] - b[i]) / scale);
    }
    return worst;
}

std::vector<double> qp_box_solve(const std::vector<std::vector<double>>& q, double c, double tol,
                                 long max_sweeps) {
    const size_t n = q.size();
    std::vector<double> a(n, 0.0);
    for (long sweep = 0; sweep < max_sweeps; ++sweep) {
        double worst = 0.0;
        for (size_t i = 0; i < n; ++i) {
            double grad = 1.0;
            for (size_t j = 0; j < n; ++j) grad -= q[i][j] * a[j];
            const double qii = q[i][i] > 0.0 ? q[i][i] : 1e-12;
            const double next = std::clamp(a[i] + grad / qii, 0.0, c);
            worst = std::max(worst, std::fabs(next - a[i]));
            a[i] = next;
        }
        if (worst < tol) break;
    }
    return a;
}

long long pairwise_auc_units(const std::vector<double>& genuine,
                             const std::vector<double>& impostor) {
    long long units = 0;
    for (double g : genuine) {
        for (double i : impostor) {
            if (g > i)
                units += 2;
            else if (g == i)
                units += 1;
        }
    }
    return units;
}

double pairwise_auc(const std::vector<double>& genuine, const std::vector<double>& impostor) {
    const long long units = pairwise_auc_units(genuine, impostor);
    return static_cast<double>(units) /
           (2.0 * static_cast<double>(genuine.size()) * static_cast<double>(impostor.size()));
}

namespace {

// Bilinear read in lerp form; coordinates within 1e-9 of a grid point are
// read directly (the compass samples of the unit circle land there).
double sample_at(const handbio::Image& img, double sx, double sy) {
    const double rx = std::round(sx), ry = std::round(sy);
    const double x = std::fabs(sx - rx) < 1e-9 ? rx : sx;
    const double y = std::fabs(sy - ry) < 1e-9 ? ry : sy;
    const int x0 = static_cast<int>(std::floor(x)), y0 = static_cast<int>(std::floor(y));
    const double fx = x - x0, fy = y - y0;
    if (fx == 0.0 && fy == 0.0) return img.at(y0, x0);
    const int x1 = std::min(x0 + 1, img.width - 1), y1 = std::min(y0 + 1, img.height - 1);
    const double top = img.at(y0, x0) + fx * (img.at(y0, x1) - img.at(y0, x0));
    const double bot = img.at(y1, x0) + fx * (img.at(y1, x1) - img.at(y1, x0));
    return top + fy * (bot - top);
}

int circular_transitions(int code) {
    int t = 0;
    for (int i = 0; i < 8; ++i) {
        const int a = (code >> i) & 1;
        const int b = (code >> ((i + 1) % 8)) & 1;
        t += a != b;
    }
    return t;
}

}  // namespace

std::vector<double> lbp_hist_oracle(const handbio::Image& img, const handbio::lbp::LbpParams& p) {
    // Uniform bins in ascending code order, catch-all last.
    std::vector<int> bin_of(256, -1);
    int next = 0;
    for (int code = 0; code < 256; ++code) {
        if (circular_transitions(code) <= 2) bin_of[code] = next++;
    }
    const int bins = p.uniform ? next + 1 : 256;
    std::vector<double> hist(bins, 0.0);
    const int r = p.radius;
    long total = 0;
    for (int y = r; y < img.height - r; ++y) {
        for (int x = r; x < img.width - r; ++x) {
            const double center = img.at(y, x);
            int code = 0;
            for (int i = 0; i < 8; ++i) {
                const double angle = 2.0 * M_PI * i / 8.0;
                const double sx = x + r * std::cos(angle);
                const double sy = y - r * std::sin(angle);
                if (sample_at(img, sx, sy) >= center) code |= 1 << i;
            }
            const int slot = p.uniform ? (bin_of[code] >= 0 ? bin_of[code] : bins - 1) : code;
            hist[static_cast<size_t>(slot)] += 1.0;
            ++total;
        }
    }
    for (double& v : hist) v /= static_cast<double>(total);
    return hist;
}

}  // namespace testsupport
