#include "fdecay/common.hpp"

#include <atomic>
#include <random>
#include <thread>

namespace fdecay {

void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& body) {
    if (workers <= 1 || n < 2) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::atomic<bool> failed{false};
    auto run = [&] {
        for (;;) {
            std::size_t i = next.fetch_add(1);
            if (i >= n || failed.load()) return;
            try {
                body(i);
            } catch (...) {
                if (!failed.exchange(true)) failure = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    int t = static_cast<int>(std::min<std::size_t>(n, static_cast<std::size_t>(workers)));
    for (int k = 1; k < t; ++k) pool.emplace_back(run);
    run();
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
}

std::vector<Vec> direction_grid(int d, int count) {
    std::vector<Vec> out;
    if (d == 1) {
        out.push_back(Vec::Ones(1));
        return out;
    }
    count = std::max(count, 1);
    if (d == 2) {
        for (int k = 0; k < count; ++k) {
            double th = kPi * k / count;
            Vec e(2);
            e << std::cos(th), std::sin(th);
            out.push_back(e);
        }
        return out;
    }
    if (d == 3) {
        const double golden = kPi * (3.0 - std::sqrt(5.0));
        for (int k = 0; k < count; ++k) {
            double z = 1.0 - (k + 0.5) / count;
            double r = std::sqrt(std::max(0.0, 1.0 - z * z));
            Vec e(3);
            e << r * std::cos(golden * k), r * std::sin(golden * k), z;
            out.push_back(e);
        }
        return out;
    }
    std::mt19937_64 rng(0x5eedULL + static_cast<unsigned>(d));
    for (int k = 0; k < count; ++k) {
        Vec e = random_unit_vector(rng, d);
        if (e[d - 1] < 0) e = -e;
        out.push_back(e);
    }
    return out;
}

LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw InvalidArgument("fit_line: size mismatch");
    const std::size_t n = x.size();
    if (n < 2) throw DegenerateFit("need at least two points");
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx <= 1e-300) throw DegenerateFit("abscissae are all equal");
    LineFit f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    for (std::size_t i = 0; i < n; ++i) {
        double r = y[i] - f.intercept - f.slope * x[i];
        f.rss += r * r;
    }
    f.r2 = syy > 0 ? 1.0 - f.rss / syy : 1.0;
    return f;
}

bool snap_fraction(double r, long long& num, long long& den) {
    double frac = r;
    long long h0 = 0, h1 = 1, k0 = 1, k1 = 0;   // h/k convergents
    for (int it = 0; it < 40; ++it) {
        double a = std::floor(frac);
        long long ai = static_cast<long long>(a);
        long long h2 = ai * h1 + h0, k2 = ai * k1 + k0;
        if (k2 > 1000000) return false;
        h0 = h1;
        h1 = h2;
        k0 = k1;
        k1 = k2;
        if (std::abs(r - static_cast<double>(h1) / k1) <= 1e-15 * std::abs(r)) {
            num = h1;
            den = k1;
            return true;
        }
        double f = frac - a;
        if (f < 1e-300) return false;
        frac = 1.0 / f;
    }
    return false;
}

}  // namespace fdecay
