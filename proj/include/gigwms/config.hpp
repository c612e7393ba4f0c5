#pragma once

#include <cmath>
#include <stdexcept>

namespace gigwms {

/// Parameters of the randomized feasibility check: violation tolerance eta,
/// confidence delta, zeta exponent alpha and level-function slope b.
struct VerifierConfig {
    double eta = 0.05;
    double delta = 1e-8;
    double alpha = 2.0;
    double b = 1.0;

    void validate() const {
        if (!(eta > 0.0 && eta < 1.0)) throw std::invalid_argument("verifier: eta must be in (0,1)");
        if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("verifier: delta must be in (0,1)");
        if (!(alpha > 1.0)) throw std::invalid_argument("verifier: alpha must be > 1");
        if (!(b > 0.0)) throw std::invalid_argument("verifier: b must be > 0");
    }
};

/// Controller configuration: horizon, workload target, chance-constraint
/// tolerance and the epsilon-tightening schedule.
struct MpcConfig {
    int horizon = 3;
    double x_ref = 10.0;
    double eta = 0.05;
    double epsilon0 = 0.01;
    double gamma = 0.5;
    VerifierConfig verifier{};
    int max_tighten_iters = 50;

    void validate() const {
        if (horizon < 1) throw std::invalid_argument("mpc: horizon must be >= 1");
        if (!(epsilon0 > 0.0 && epsilon0 < 1.0)) throw std::invalid_argument("mpc: epsilon0 must be in (0,1)");
        if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("mpc: gamma must be in (0,1)");
        if (!(eta > 0.0 && eta < 1.0)) throw std::invalid_argument("mpc: eta must be in (0,1)");
        if (!std::isfinite(x_ref)) throw std::invalid_argument("mpc: x_ref must be finite");
        if (max_tighten_iters < 0) throw std::invalid_argument("mpc: max_tighten_iters must be >= 0");
        verifier.validate();
    }
};

} // namespace gigwms
