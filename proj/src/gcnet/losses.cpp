#include "gcnet/losses.hpp"

#include <algorithm>
#include <cmath>

#include "gcnet/errors.hpp"

namespace gcnet {

namespace {

// Writes softmax of one row of n logits into p.
void softmax_row(const double* z, int n, double* p) {
    double mx = z[0];
    for (int i = 1; i < n; ++i) mx = std::max(mx, z[i]);
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        p[i] = std::exp(z[i] - mx);
        sum += p[i];
    }
    const double inv = 1.0 / sum;
    for (int i = 0; i < n; ++i) p[i] *= inv;
}

void check_logits(const Tensor& logits) {
    if (logits.ndim() != 2) throw UsageError("logits must be a {m, n} tensor, got " + dims_str(logits.dims));
    if (logits.dim(1) < 2) throw UsageError("logits need at least 2 classes");
}

}  // namespace

AreaLossResult area_loss(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.empty()) throw UsageError("area_loss needs matching nonempty extent lists");
    const std::size_t m = a.size();
    AreaLossResult r;
    r.d_a.resize(m);
    r.d_b.resize(m);
    const double inv_m = 1.0 / static_cast<double>(m);
    double acc = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
        acc += a[j] * b[j];
        r.d_a[j] = b[j] * inv_m;
        r.d_b[j] = a[j] * inv_m;
    }
    r.value = acc * inv_m;
    return r;
}

LogitsLossResult object_loss(const Tensor& logits, const std::vector<int>& labels) {
    check_logits(logits);
    const int m = static_cast<int>(logits.dim(0));
    const int n = static_cast<int>(logits.dim(1));
    if (static_cast<int>(labels.size()) != m) throw UsageError("label count does not match logit rows");
    LogitsLossResult r;
    r.grad = Tensor({static_cast<std::int64_t>(m), static_cast<std::int64_t>(n)});
    std::vector<double> p(n);
    const double inv_m = 1.0 / m;
    double acc = 0.0;
    for (int j = 0; j < m; ++j) {
        const int y = labels[j];
        if (y < 0 || y >= n) throw UsageError("label out of class range");
        softmax_row(logits.data() + static_cast<std::int64_t>(j) * n, n, p.data());
        acc -= std::log(p[y]);
        double* g = r.grad.data() + static_cast<std::int64_t>(j) * n;
        for (int i = 0; i < n; ++i) g[i] = p[i] * inv_m;
        g[y] -= inv_m;
    }
    r.value = acc * inv_m;
    return r;
}

LogitsLossResult background_loss(const Tensor& logits) {
    check_logits(logits);
    const int m = static_cast<int>(logits.dim(0));
    const int n = static_cast<int>(logits.dim(1));
    LogitsLossResult r;
    r.grad = Tensor({static_cast<std::int64_t>(m), static_cast<std::int64_t>(n)});
    std::vector<double> p(n);
    const double inv_m = 1.0 / m;
    double acc = 0.0;
    for (int j = 0; j < m; ++j) {
        softmax_row(logits.data() + static_cast<std::int64_t>(j) * n, n, p.data());
        double ent = 0.0;
        for (int i = 0; i < n; ++i) ent += p[i] * std::log(p[i]);
        acc += ent;
        // d(sum p log p)/dz_k = p_k (log p_k - sum_i p_i log p_i)
        double* g = r.grad.data() + static_cast<std::int64_t>(j) * n;
        for (int i = 0; i < n; ++i) g[i] = p[i] * (std::log(p[i]) - ent) * inv_m;
    }
    r.value = acc * inv_m;
    return r;
}

double combined_loss(double area, double object, double background, const LossWeights& w) {
    return w.alpha * area + w.beta * object + w.gamma * background;
}

DiceLossResult dice_loss(const MaskGrid& pred, const MaskGrid& target) {
    if (pred.h != target.h || pred.w != target.w) throw UsageError("dice_loss mask dims differ");
    const std::size_t n = pred.v.size();
    double spq = 0.0, sp = 0.0, sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        spq += pred.v[i] * target.v[i];
        sp += pred.v[i];
        sq += target.v[i];
    }
    const double num = 2.0 * spq + 1.0;
    const double den = sp + sq + 1.0;
    DiceLossResult r;
    r.value = 1.0 - num / den;
    r.grad = MaskGrid(pred.h, pred.w);
    const double inv_den2 = 1.0 / (den * den);
    for (std::size_t i = 0; i < n; ++i)
        r.grad.v[i] = (num - 2.0 * target.v[i] * den) * inv_den2;
    return r;
}

}  // namespace gcnet
