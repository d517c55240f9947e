#include "cdaae/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace cdaae {

double gradient_check(const std::function<BasicTensor<double>()>& fn, const std::vector<BasicTensor<double>>& params,
                      const GradCheckOptions& options)
{
    for (auto p : params) p.zero_grad();
    auto loss = fn();
    backward(loss);

    std::vector<std::vector<double>> analytic;
    for (const auto& p : params) analytic.emplace_back(p.grad().begin(), p.grad().end());

    std::mt19937_64 rng(options.seed);
    double worst = 0.0;
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto p = params[k];
        std::vector<std::size_t> coords(p.size());
        std::iota(coords.begin(), coords.end(), std::size_t{0});
        if (options.samples_per_param != 0 && options.samples_per_param < coords.size()) {
            std::shuffle(coords.begin(), coords.end(), rng);
            coords.resize(options.samples_per_param);
        }
        auto values = p.mutable_values();
        for (auto i : coords) {
            const double saved = values[i];
            const double centre = options.kink_retries ? fn().item() : 0.0;
            double step = options.eps, numeric = 0.0;
            for (std::size_t attempt = 0;; ++attempt, step /= 10.0) {
                values[i] = saved + step;
                const double up = fn().item();
                values[i] = saved - step;
                const double down = fn().item();
                values[i] = saved;
                numeric = (up - down) / (2.0 * step);
                if (attempt == options.kink_retries) break;
                const double fwd = (up - centre) / step, bwd = (centre - down) / step;
                const double roundoff = 16.0 * std::numeric_limits<double>::epsilon() * std::max(std::abs(centre), 1.0) / step;
                if (std::abs(fwd - bwd) <=
                    options.kink_tol * std::max({std::abs(fwd), std::abs(bwd), options.floor}) + roundoff)
                    break;
            }
            const double a = analytic[k][i];
            const double denom = std::max({std::abs(a), std::abs(numeric), options.floor});
            worst = std::max(worst, std::abs(a - numeric) / denom);
        }
    }
    return worst;
}

} // namespace cdaae
