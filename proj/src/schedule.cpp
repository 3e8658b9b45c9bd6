#include "progfuse/schedule.hpp"

#include <cmath>
#include <numbers>

#include "progfuse/errors.hpp"
#include "progfuse/ops.hpp"

namespace progfuse {

double NoiseSchedule::beta(int t) const {
    if (t < 1 || t > m_train_steps) {
        throw InvalidArgument("beta: timestep " + std::to_string(t) + " outside [1, " +
                              std::to_string(m_train_steps) + "]");
    }
    return m_betas[t];
}

double NoiseSchedule::alpha_bar(int t) const {
    if (t < 0 || t > m_train_steps) {
        throw InvalidArgument("alpha_bar: timestep " + std::to_string(t) + " outside [0, " +
                              std::to_string(m_train_steps) + "]");
    }
    return m_alpha_bars[t];
}

NoiseSchedule build_schedule(int train_steps, double beta_start, double beta_end, int inference_steps,
                             BetaLaw law) {
    if (train_steps < 1) {
        throw InvalidArgument("build_schedule: train_steps must be positive");
    }
    if (inference_steps < 1 || inference_steps > train_steps) {
        throw InvalidArgument("build_schedule: inference_steps " + std::to_string(inference_steps) +
                              " must be in [1, train_steps=" + std::to_string(train_steps) + "]");
    }
    if (!(beta_start > 0.0) || !(beta_start <= beta_end) || !(beta_end < 1.0)) {
        throw InvalidArgument("build_schedule: require 0 < beta_start <= beta_end < 1");
    }

    NoiseSchedule s;
    s.m_train_steps = train_steps;
    s.m_betas.assign(train_steps + 1, 0.0);
    s.m_alpha_bars.assign(train_steps + 1, 1.0);
    for (int t = 1; t <= train_steps; ++t) {
        const double frac = train_steps == 1 ? 0.0 : static_cast<double>(t - 1) / (train_steps - 1);
        double beta;
        if (law == BetaLaw::scaled_linear) {
            const double root = std::sqrt(beta_start) + frac * (std::sqrt(beta_end) - std::sqrt(beta_start));
            beta = root * root;
        } else {
            beta = beta_start + frac * (beta_end - beta_start);
        }
        if (beta_start == beta_end) {
            beta = beta_start;
        }
        s.m_betas[t] = beta;
        s.m_alpha_bars[t] = s.m_alpha_bars[t - 1] * (1.0 - beta);
    }

    // Uniform stride with a +1 offset so the last step lands on t = 1.
    s.m_timesteps.reserve(inference_steps);
    for (int i = inference_steps - 1; i >= 0; --i) {
        const long long scaled = static_cast<long long>(i) * train_steps / inference_steps;
        s.m_timesteps.push_back(static_cast<int>(scaled) + 1);
    }
    return s;
}

std::vector<std::pair<int, Latent>> diffuse_trajectory(const Latent& z0, const NoiseSchedule& schedule,
                                                       RngStream& rng) {
    if (!z0.all_finite()) {
        throw InvalidArgument("diffuse_trajectory: initial latent is not finite");
    }
    const auto& steps = schedule.timesteps();
    std::vector<std::pair<int, Latent>> kept;
    kept.reserve(steps.size() + 1);
    kept.emplace_back(0, z0);

    // Timesteps are decreasing; walk them from the back while t increases.
    auto next_keep = steps.rbegin();
    Latent z = z0;
    for (int t = 1; t <= schedule.train_steps() && next_keep != steps.rend(); ++t) {
        const double beta = schedule.beta(t);
        const double keep = std::sqrt(1.0 - beta);
        const double noise = std::sqrt(beta);
        for (float& v : z.data()) {
            v = static_cast<float>(keep * v + noise * rng.normal());
        }
        if (t == *next_keep) {
            kept.emplace_back(t, z);
            ++next_keep;
        }
    }
    return kept;
}

Latent diffuse_closed_form(const Latent& z0, int t, const Latent& eps, const NoiseSchedule& schedule) {
    require_same_shape(z0, eps, "diffuse_closed_form");
    if (t < 0 || t > schedule.train_steps()) {
        throw InvalidArgument("diffuse_closed_form: timestep " + std::to_string(t) + " outside [0, " +
                              std::to_string(schedule.train_steps()) + "]");
    }
    const double abar = schedule.alpha_bar(t);
    const double signal = std::sqrt(abar);
    const double noise = std::sqrt(1.0 - abar);
    Latent out(z0.shape());
    auto o = out.data();
    auto a = z0.data();
    auto e = eps.data();
    for (std::size_t i = 0; i < o.size(); ++i) {
        o[i] = static_cast<float>(signal * a[i] + noise * e[i]);
    }
    return out;
}

Latent ddim_step(const Latent& z_t, const Latent& eps_hat, int t, int t_prev, const NoiseSchedule& schedule) {
    require_same_shape(z_t, eps_hat, "ddim_step");
    if (t_prev >= t) {
        throw InvalidArgument("ddim_step: t_prev (" + std::to_string(t_prev) + ") must be < t (" +
                              std::to_string(t) + ")");
    }
    if (t_prev < 0) {
        throw InvalidArgument("ddim_step: t_prev must be >= 0");
    }
    const double abar_t = schedule.alpha_bar(t);
    const double abar_prev = schedule.alpha_bar(t_prev);
    const double noise_t = std::sqrt(1.0 - abar_t);
    const double signal_t = std::sqrt(abar_t);
    const double signal_prev = std::sqrt(abar_prev);
    const double noise_prev = std::sqrt(1.0 - abar_prev);

    Latent out(z_t.shape());
    auto o = out.data();
    auto z = z_t.data();
    auto e = eps_hat.data();
    for (std::size_t i = 0; i < o.size(); ++i) {
        const double x0 = (z[i] - noise_t * e[i]) / signal_t;
        o[i] = static_cast<float>(signal_prev * x0 + noise_prev * e[i]);
    }
    return out;
}

Latent cfg_combine(const Latent& eps_uncond, const Latent& eps_cond, double g) {
    require_same_shape(eps_uncond, eps_cond, "cfg_combine");
    Latent out(eps_uncond.shape());
    auto o = out.data();
    auto u = eps_uncond.data();
    auto c = eps_cond.data();
    for (std::size_t i = 0; i < o.size(); ++i) {
        o[i] = static_cast<float>(u[i] + g * (static_cast<double>(c[i]) - u[i]));
    }
    return out;
}

double cosine_decay(int t, int T, double alpha) {
    if (T <= 0 || t < 0 || t > T) {
        throw InvalidArgument("cosine_decay: require 0 <= t <= T, got t=" + std::to_string(t) +
                              " T=" + std::to_string(T));
    }
    if (!(alpha > 0.0)) {
        throw InvalidArgument("cosine_decay: alpha must be positive");
    }
    if (t == T) {
        return 1.0;
    }
    if (t == 0) {
        return 0.0;
    }
    const double phase = static_cast<double>(T - t) / static_cast<double>(T) * std::numbers::pi;
    const double base = (1.0 + std::cos(phase)) / 2.0;
    return std::pow(base, alpha);
}

double sigma_at(int t, int T, const DecayParams& params) {
    return cosine_decay(t, T, params.alpha3) * (params.sigma1 - params.sigma2) + params.sigma2;
}

}  // namespace progfuse
