#pragma once

#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

#include "snmpc/kernels.hpp"

// Forward-mode AD scalar carrying a dense tangent (directional-derivative)
// vector. Tangents use implicit-zero-tail storage: a stored length of s
// means components [s, W) are zero for any ambient seed width W. Arithmetic
// only ever touches the stored prefixes, so early stages of a long control
// horizon carry short tangents and the cost grows with the number of seeds
// actually reachable.

namespace snmpc {

class Dual {
public:
    Dual() = default;
    Dual(double v) : v_(v) {}  // NOLINT: implicit constant lift is the point

    static Dual seed(double v, std::size_t index) {
        Dual x(v);
        x.d_.assign(index + 1, 0.0);
        x.d_[index] = 1.0;
        return x;
    }

    // Value with an explicit tangent row; trailing zeros are trimmed so the
    // implicit-zero-tail invariant keeps downstream arithmetic short.
    static Dual with_tangent(double v, const double* d, std::size_t n) {
        while (n > 0 && d[n - 1] == 0.0) --n;
        Dual x(v);
        x.d_.assign(d, d + n);
        return x;
    }

    double value() const { return v_; }
    double& value() { return v_; }
    std::size_t tangent_size() const { return d_.size(); }
    const std::vector<double>& tangent() const { return d_; }

    double deriv(std::size_t i) const { return i < d_.size() ? d_[i] : 0.0; }

    // out[0..width) = zero-padded tangent.
    void copy_tangent(double* out, std::size_t width) const {
        const auto& k = kernels::active();
        std::size_t s = d_.size() < width ? d_.size() : width;
        if (s > 0) k.copy(s, d_.data(), out);
        if (width > s) k.fill(width - s, 0.0, out + s);
    }

    Dual& operator+=(const Dual& o) {
        v_ += o.v_;
        tan_acc(o.d_, 1.0);
        return *this;
    }
    Dual& operator-=(const Dual& o) {
        v_ -= o.v_;
        tan_acc(o.d_, -1.0);
        return *this;
    }
    Dual& operator+=(double a) {
        v_ += a;
        return *this;
    }
    Dual& operator-=(double a) {
        v_ -= a;
        return *this;
    }
    Dual& operator*=(double a) {
        v_ *= a;
        if (!d_.empty()) kernels::active().scale(d_.size(), a, d_.data());
        return *this;
    }
    Dual& operator/=(double a) { return *this *= 1.0 / a; }

    Dual& operator*=(const Dual& o) {
        // d(xy) = y dx + x dy; x's value is consumed before it is overwritten.
        const auto& k = kernels::active();
        if (o.d_.empty()) {
            if (!d_.empty()) k.scale(d_.size(), o.v_, d_.data());
        } else if (d_.empty()) {
            d_.resize(o.d_.size());
            k.copy_scaled(o.d_.size(), v_, o.d_.data(), d_.data());
        } else {
            std::size_t s = d_.size(), so = o.d_.size();
            if (so > s) d_.resize(so, 0.0);
            std::size_t c = s < so ? s : so;
            k.lincomb(c, o.v_, d_.data(), v_, o.d_.data(), d_.data());
            if (s > so) k.scale(s - so, o.v_, d_.data() + so);
            if (so > s) k.copy_scaled(so - s, v_, o.d_.data() + s, d_.data() + s);
        }
        v_ *= o.v_;
        return *this;
    }

    Dual& operator/=(const Dual& o) {
        v_ /= o.v_;
        // d(x/y) = dx/y - (x/y) dy/y, with x/y already updated in v_.
        tan_scale_acc(1.0 / o.v_, o.d_, -v_ / o.v_);
        return *this;
    }

    // *this += w * a * b for double weight w. Covariance-assembly hot path.
    Dual& fmadd(double w, const Dual& a, const Dual& b) {
        v_ += w * a.v_ * b.v_;
        tan_acc2(w * b.v_, a.d_, w * a.v_, b.d_);
        return *this;
    }

    // *this += a * x.
    Dual& axpy(double a, const Dual& x) {
        v_ += a * x.v_;
        tan_acc(x.d_, a);
        return *this;
    }

    Dual operator-() const {
        Dual r(*this);
        r.v_ = -r.v_;
        if (!r.d_.empty()) kernels::active().scale(r.d_.size(), -1.0, r.d_.data());
        return r;
    }

    friend Dual operator+(Dual a, const Dual& b) { return a += b; }
    friend Dual operator-(Dual a, const Dual& b) { return a -= b; }
    friend Dual operator*(Dual a, const Dual& b) { return a *= b; }
    friend Dual operator/(Dual a, const Dual& b) { return a /= b; }
    friend Dual operator+(Dual a, double b) { return a += b; }
    friend Dual operator-(Dual a, double b) { return a -= b; }
    friend Dual operator*(Dual a, double b) { return a *= b; }
    friend Dual operator/(Dual a, double b) { return a /= b; }
    friend Dual operator+(double a, Dual b) { return b += a; }
    friend Dual operator-(double a, const Dual& b) {
        Dual r = -b;
        r.v_ += a;
        return r;
    }
    friend Dual operator*(double a, Dual b) { return b *= a; }
    friend Dual operator/(double a, const Dual& b) {
        Dual r(a);
        return r /= b;
    }

    friend bool operator<(const Dual& a, const Dual& b) { return a.v_ < b.v_; }
    friend bool operator>(const Dual& a, const Dual& b) { return a.v_ > b.v_; }
    friend bool operator<=(const Dual& a, const Dual& b) { return a.v_ <= b.v_; }
    friend bool operator>=(const Dual& a, const Dual& b) { return a.v_ >= b.v_; }

    friend Dual sqrt(const Dual& x) {
        Dual r;
        r.v_ = std::sqrt(x.v_);
        r.set_scaled(x.d_, 0.5 / r.v_);
        return r;
    }
    friend Dual exp(const Dual& x) {
        Dual r;
        r.v_ = std::exp(x.v_);
        r.set_scaled(x.d_, r.v_);
        return r;
    }
    friend Dual log(const Dual& x) {
        Dual r;
        r.v_ = std::log(x.v_);
        r.set_scaled(x.d_, 1.0 / x.v_);
        return r;
    }
    friend Dual fabs(const Dual& x) { return x.v_ < 0.0 ? -x : x; }
    friend bool isfinite_value(const Dual& x) { return std::isfinite(x.v_); }

private:
    void set_scaled(const std::vector<double>& src, double a) {
        d_.resize(src.size());
        if (!src.empty()) kernels::active().copy_scaled(src.size(), a, src.data(), d_.data());
    }
    // d += a * src, growing as needed.
    void tan_acc(const std::vector<double>& src, double a) {
        if (src.empty()) return;
        const auto& k = kernels::active();
        if (src.size() > d_.size()) d_.resize(src.size(), 0.0);
        k.axpy(src.size(), a, src.data(), d_.data());
    }
    void tan_scale_acc(double self_scale, const std::vector<double>& src, double a) {
        const auto& k = kernels::active();
        if (!d_.empty()) k.scale(d_.size(), self_scale, d_.data());
        tan_acc(src, a);
    }
    // d += a*x + b*y.
    void tan_acc2(double a, const std::vector<double>& x, double b, const std::vector<double>& y) {
        if (x.empty()) {
            tan_acc(y, b);
            return;
        }
        if (y.empty()) {
            tan_acc(x, a);
            return;
        }
        const auto& k = kernels::active();
        std::size_t s = x.size() > y.size() ? x.size() : y.size();
        if (s > d_.size()) d_.resize(s, 0.0);
        std::size_t c = x.size() < y.size() ? x.size() : y.size();
        k.acc_lincomb(c, a, x.data(), b, y.data(), d_.data());
        if (x.size() > c) k.axpy(x.size() - c, a, x.data() + c, d_.data() + c);
        if (y.size() > c) k.axpy(y.size() - c, b, y.data() + c, d_.data() + c);
    }

    double v_ = 0.0;
    std::vector<double> d_;
};

// Uniform scalar access for code templated on T in {double, Dual}.
inline double value_of(double x) { return x; }
inline double value_of(const Dual& x) { return x.value(); }

inline bool isfinite_value(double x) { return std::isfinite(x); }

// Weighted accumulation acc += w * x working for both scalars.
inline void acc_axpy(double& acc, double w, double x) { acc += w * x; }
inline void acc_axpy(Dual& acc, double w, const Dual& x) { acc.axpy(w, x); }

}  // namespace snmpc
