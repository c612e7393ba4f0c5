#pragma once

#include <span>
#include <stdexcept>

namespace gigwms {

/// Scalar workload dynamics x(k+1) = A*x(k) - u(k) + d(k).
struct PlantModel {
    double growth = 1.0; // A, >= 1
    double inflow = 0.0; // d, workload added per step
};

struct WorkloadState {
    double x = 0.0;
    int k = 0;
};

inline WorkloadState step(const WorkloadState& state, double actual_hours, const PlantModel& model) {
    if (actual_hours < 0.0) throw std::invalid_argument("step: negative task hours");
    return WorkloadState{model.growth * state.x - actual_hours + model.inflow, state.k + 1};
}

/// Terminal workload after N steps with planned hours gated by the
/// acceptance bits: u(t) = beta(t) * hours(t).
inline double predict_terminal(double x0, std::span<const double> planned_hours,
                               std::span<const int> acceptance, const PlantModel& model) {
    if (planned_hours.size() != acceptance.size() || planned_hours.empty())
        throw std::invalid_argument("predict_terminal: sequences must have equal length N >= 1");
    double x = x0;
    for (size_t t = 0; t < planned_hours.size(); ++t) {
        x = model.growth * x - (acceptance[t] ? planned_hours[t] : 0.0) + model.inflow;
    }
    return x;
}

} // namespace gigwms
