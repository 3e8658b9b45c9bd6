#pragma once

#include <string>
#include <utility>
#include <vector>

#include "progfuse/latent.hpp"
#include "progfuse/rng.hpp"

namespace progfuse {

enum class BetaLaw {
    scaled_linear,  // linear in sqrt(beta)
    linear,
};

/// Training-time variance schedule plus the DDIM inference subsequence.
/// alpha_bar(0) is 1; betas are indexed 1..T_train.
class NoiseSchedule {
public:
    int train_steps() const noexcept { return m_train_steps; }
    int inference_steps() const noexcept { return static_cast<int>(m_timesteps.size()); }

    double beta(int t) const;
    double alpha_bar(int t) const;
    const std::vector<double>& betas() const noexcept { return m_betas; }
    const std::vector<double>& alpha_bars() const noexcept { return m_alpha_bars; }

    // Strictly decreasing DDIM timesteps, e.g. 981, 961, ..., 1 for 1000/50.
    const std::vector<int>& timesteps() const noexcept { return m_timesteps; }
    // Timestep the step starting at `timesteps()[i]` lands on (0 after the last).
    int previous_timestep(std::size_t i) const noexcept {
        return i + 1 < m_timesteps.size() ? m_timesteps[i + 1] : 0;
    }

private:
    friend NoiseSchedule build_schedule(int, double, double, int, BetaLaw);

    int m_train_steps = 0;
    std::vector<double> m_betas;       // index 0 unused (0.0)
    std::vector<double> m_alpha_bars;  // index 0 == 1.0
    std::vector<int> m_timesteps;
};

NoiseSchedule build_schedule(int train_steps = 1000, double beta_start = 0.00085, double beta_end = 0.012,
                             int inference_steps = 50, BetaLaw law = BetaLaw::scaled_linear);

/// Exponents of the three cosine decay curves and the filter sigma range.
struct DecayParams {
    double alpha1 = 3.0;  // skip residual
    double alpha2 = 1.0;  // global/local fusion
    double alpha3 = 1.0;  // filter sigma
    double sigma1 = 1.0;
    double sigma2 = 0.01;
};

struct GuidanceSpec {
    double scale = 7.5;
    std::string conditioning_id;
    std::string unconditional_id;
};

// Sequential forward chain z_t = sqrt(1 - beta_t) z_{t-1} + sqrt(beta_t) eps_t
// for t = 1..T_train with fresh noise per step. Only t = 0 and the DDIM
// timesteps are kept, in increasing t.
std::vector<std::pair<int, Latent>> diffuse_trajectory(const Latent& z0, const NoiseSchedule& schedule,
                                                       RngStream& rng);

// sqrt(abar_t) z0 + sqrt(1 - abar_t) eps.
Latent diffuse_closed_form(const Latent& z0, int t, const Latent& eps, const NoiseSchedule& schedule);

// Deterministic (eta = 0) DDIM update from t to t_prev.
Latent ddim_step(const Latent& z_t, const Latent& eps_hat, int t, int t_prev, const NoiseSchedule& schedule);

// eps_uncond + g (eps_cond - eps_uncond).
Latent cfg_combine(const Latent& eps_uncond, const Latent& eps_cond, double g);

// ((1 + cos((T - t) / T * pi)) / 2) ^ alpha: 1 at t = T, 0 at t = 0.
double cosine_decay(int t, int T, double alpha);

// Filter standard deviation at timestep t, decaying from sigma1 to sigma2.
double sigma_at(int t, int T, const DecayParams& params);

}  // namespace progfuse
