#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "gigwms/rng.hpp"
#include "gigwms/worker_model.hpp"

namespace gigwms {

/// One aggregated survey cell: offered hours/wage and the fraction of
/// respondents who would accept.
struct SurveyPoint {
    double hours = 0.0;
    double wage = 0.0;
    double accept_ratio = 0.0;
};

struct FittedModel {
    double kappa = 0.0;
    double lambda = 0.0;
    double nu = 0.0;
    double residual = 0.0; // sum of squared errors in the fitted space
    int point_count = 0;
    bool signs_ok = true; // kappa < 0 and lambda > 0
};

/// Coefficients identified from the bundled 500-respondent survey of
/// short-task acceptance (hours in h, wages in JPY).
inline FittedModel default_fitted_model() {
    return FittedModel{-7.253, 0.006385, -1.216, 0.0, 20, true};
}

/// The survey's offer grid: four task durations, five wage options each.
inline std::vector<SurveyPoint> default_survey_grid() {
    static const std::array<double, 4> hours{0.5, 1.0, 1.5, 2.0};
    static const std::array<std::array<double, 5>, 4> wages{{
        {500, 550, 600, 650, 700},
        {1000, 1100, 1200, 1300, 1400},
        {1500, 1650, 1800, 1950, 2100},
        {2000, 2200, 2400, 2600, 2800},
    }};
    std::vector<SurveyPoint> grid;
    for (size_t i = 0; i < hours.size(); ++i)
        for (double w : wages[i]) grid.push_back({hours[i], w, 0.0});
    return grid;
}

namespace detail {

// Solve the 3x3 system M x = rhs by Gaussian elimination with partial
// pivoting; throws on rank deficiency.
inline std::array<double, 3> solve3(std::array<std::array<double, 3>, 3> M, std::array<double, 3> rhs) {
    for (int col = 0; col < 3; ++col) {
        int pivot = col;
        for (int r = col + 1; r < 3; ++r)
            if (std::fabs(M[static_cast<size_t>(r)][static_cast<size_t>(col)]) >
                std::fabs(M[static_cast<size_t>(pivot)][static_cast<size_t>(col)]))
                pivot = r;
        if (std::fabs(M[static_cast<size_t>(pivot)][static_cast<size_t>(col)]) < 1e-12)
            throw std::runtime_error("fit: design matrix is rank deficient (collinear survey grid)");
        std::swap(M[static_cast<size_t>(col)], M[static_cast<size_t>(pivot)]);
        std::swap(rhs[static_cast<size_t>(col)], rhs[static_cast<size_t>(pivot)]);
        for (int r = 0; r < 3; ++r) {
            if (r == col) continue;
            const double f = M[static_cast<size_t>(r)][static_cast<size_t>(col)] /
                             M[static_cast<size_t>(col)][static_cast<size_t>(col)];
            for (int c = col; c < 3; ++c)
                M[static_cast<size_t>(r)][static_cast<size_t>(c)] -=
                    f * M[static_cast<size_t>(col)][static_cast<size_t>(c)];
            rhs[static_cast<size_t>(r)] -= f * rhs[static_cast<size_t>(col)];
        }
    }
    return {rhs[0] / M[0][0], rhs[1] / M[1][1], rhs[2] / M[2][2]};
}

} // namespace detail

/// Least-squares identification of (kappa, lambda, nu): empirical-logit
/// transform y = ln(z/(1-z)) followed by ordinary linear least squares of y
/// on (hours, wage, 1). Ratios at 0 or 1 are clipped to 1/(2R) from the
/// boundary, R being the respondent count behind each cell. Columns are
/// centered and scaled before the normal equations are solved, so the three
/// orders of magnitude between hours and wages do not poison the solve.
inline FittedModel fit(const std::vector<SurveyPoint>& points, int respondents = 500) {
    if (points.size() < 3) throw std::invalid_argument("fit: need at least 3 survey points");
    if (respondents < 1) throw std::invalid_argument("fit: respondents must be >= 1");
    const double clip = 1.0 / (2.0 * respondents);
    const size_t n = points.size();
    std::vector<double> y(n);
    for (size_t i = 0; i < n; ++i) {
        const auto& p = points[i];
        if (!(p.hours > 0.0)) throw std::invalid_argument("fit: hours must be positive");
        if (p.accept_ratio < 0.0 || p.accept_ratio > 1.0)
            throw std::invalid_argument("fit: accept_ratio outside [0,1]");
        const double z = std::clamp(p.accept_ratio, clip, 1.0 - clip);
        y[i] = std::log(z / (1.0 - z));
    }

    double mh = 0.0, mw = 0.0;
    for (const auto& p : points) { mh += p.hours; mw += p.wage; }
    mh /= static_cast<double>(n);
    mw /= static_cast<double>(n);
    double sh = 0.0, sw = 0.0;
    for (const auto& p : points) {
        sh += (p.hours - mh) * (p.hours - mh);
        sw += (p.wage - mw) * (p.wage - mw);
    }
    sh = std::sqrt(sh / static_cast<double>(n));
    sw = std::sqrt(sw / static_cast<double>(n));
    if (sh == 0.0) sh = 1.0;
    if (sw == 0.0) sw = 1.0;

    std::array<std::array<double, 3>, 3> M{};
    std::array<double, 3> rhs{};
    for (size_t i = 0; i < n; ++i) {
        const double c0 = (points[i].hours - mh) / sh;
        const double c1 = (points[i].wage - mw) / sw;
        const std::array<double, 3> row{c0, c1, 1.0};
        for (int a = 0; a < 3; ++a) {
            for (int b = 0; b < 3; ++b)
                M[static_cast<size_t>(a)][static_cast<size_t>(b)] +=
                    row[static_cast<size_t>(a)] * row[static_cast<size_t>(b)];
            rhs[static_cast<size_t>(a)] += row[static_cast<size_t>(a)] * y[i];
        }
    }
    const auto beta = detail::solve3(M, rhs);

    FittedModel model;
    model.kappa = beta[0] / sh;
    model.lambda = beta[1] / sw;
    model.nu = beta[2] - beta[0] * mh / sh - beta[1] * mw / sw;
    model.point_count = static_cast<int>(n);
    model.residual = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double pred = model.kappa * points[i].hours + model.lambda * points[i].wage + model.nu;
        model.residual += (y[i] - pred) * (y[i] - pred);
    }
    model.signs_ok = model.kappa < 0.0 && model.lambda > 0.0;
    return model;
}

/// Optional Gauss-Newton refinement of a fit, minimizing squared residuals
/// in probability space instead of logit space.
inline FittedModel refine_probability_space(const FittedModel& start,
                                            const std::vector<SurveyPoint>& points,
                                            int max_iters = 100, double step_tol = 1e-10) {
    double kappa = start.kappa, lambda = start.lambda, nu = start.nu;
    for (int iter = 0; iter < max_iters; ++iter) {
        std::array<std::array<double, 3>, 3> M{};
        std::array<double, 3> rhs{};
        for (const auto& p : points) {
            const double s = sigmoid(kappa * p.hours + lambda * p.wage + nu);
            const double g = s * (1.0 - s);
            const double r = p.accept_ratio - s;
            const std::array<double, 3> grad{g * p.hours, g * p.wage, g};
            for (int a = 0; a < 3; ++a) {
                for (int b = 0; b < 3; ++b)
                    M[static_cast<size_t>(a)][static_cast<size_t>(b)] +=
                        grad[static_cast<size_t>(a)] * grad[static_cast<size_t>(b)];
                rhs[static_cast<size_t>(a)] += grad[static_cast<size_t>(a)] * r;
            }
        }
        std::array<double, 3> delta{};
        try {
            delta = detail::solve3(M, rhs);
        } catch (const std::runtime_error&) {
            break; // flat Jacobian; keep the current iterate
        }
        kappa += delta[0];
        lambda += delta[1];
        nu += delta[2];
        const double step = std::sqrt(delta[0] * delta[0] + delta[1] * delta[1] + delta[2] * delta[2]);
        if (step < step_tol) break;
    }
    FittedModel model;
    model.kappa = kappa;
    model.lambda = lambda;
    model.nu = nu;
    model.point_count = static_cast<int>(points.size());
    model.residual = 0.0;
    for (const auto& p : points) {
        const double s = sigmoid(kappa * p.hours + lambda * p.wage + nu);
        model.residual += (p.accept_ratio - s) * (p.accept_ratio - s);
    }
    model.signs_ok = model.kappa < 0.0 && model.lambda > 0.0;
    return model;
}

/// Acceptance probability of the fitted model at an offer.
inline double predict_ratio(const FittedModel& model, double hours, double wage) {
    return sigmoid(model.kappa * hours + model.lambda * wage + model.nu);
}

/// Simulate the survey: for every grid cell draw `respondents` independent
/// accept/reject decisions from the truth model and record the empirical
/// ratio.
inline std::vector<SurveyPoint> generate_synthetic_survey(const WorkerParams& truth,
                                                          const std::vector<SurveyPoint>& grid,
                                                          int respondents, SplitMix64& rng) {
    if (respondents < 1) throw std::invalid_argument("generate_synthetic_survey: respondents >= 1");
    std::vector<SurveyPoint> out;
    out.reserve(grid.size());
    for (const auto& cell : grid) {
        const double p = accept_prob(TaskOffer{cell.hours, cell.wage}, truth);
        int accepted = 0;
        for (int r = 0; r < respondents; ++r)
            if (rng.next_double() < p) ++accepted;
        out.push_back({cell.hours, cell.wage,
                       static_cast<double>(accepted) / static_cast<double>(respondents)});
    }
    return out;
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) {
        // trim
        const auto b = field.find_first_not_of(" \t\r");
        const auto e = field.find_last_not_of(" \t\r");
        fields.push_back(b == std::string::npos ? std::string{} : field.substr(b, e - b + 1));
    }
    return fields;
}

} // namespace detail

/// Load survey data. Two layouts are accepted, detected by header:
///   hours_min,wage_jpy,accept_ratio           (aggregated cells)
///   respondent_id,hours_min,min_wage_jpy      (raw answers)
/// Raw answers give each respondent's minimum acceptable wage per duration;
/// they are folded into cells on the duration's observed wage grid, a
/// respondent accepting every wage at or above their stated minimum.
/// Durations are converted from survey minutes to hours.
inline std::vector<SurveyPoint> load_survey_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_survey_csv: cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("load_survey_csv: empty file " + path);
    const auto header = detail::split_csv_line(line);

    std::vector<SurveyPoint> points;
    if (header == std::vector<std::string>{"hours_min", "wage_jpy", "accept_ratio"}) {
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            const auto f = detail::split_csv_line(line);
            if (f.size() != 3) throw std::runtime_error("load_survey_csv: bad row: " + line);
            points.push_back({std::stod(f[0]) / 60.0, std::stod(f[1]), std::stod(f[2])});
        }
        return points;
    }
    if (header == std::vector<std::string>{"respondent_id", "hours_min", "min_wage_jpy"}) {
        std::map<double, std::vector<double>> by_duration; // minutes -> stated minimums
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            const auto f = detail::split_csv_line(line);
            if (f.size() != 3) throw std::runtime_error("load_survey_csv: bad row: " + line);
            by_duration[std::stod(f[1])].push_back(std::stod(f[2]));
        }
        for (const auto& [minutes, minimums] : by_duration) {
            std::vector<double> grid = minimums;
            std::sort(grid.begin(), grid.end());
            grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
            for (double wage : grid) {
                int accepted = 0;
                for (double m : minimums)
                    if (m <= wage) ++accepted;
                points.push_back({minutes / 60.0, wage,
                                  static_cast<double>(accepted) / static_cast<double>(minimums.size())});
            }
        }
        return points;
    }
    throw std::runtime_error("load_survey_csv: unrecognized header in " + path);
}

} // namespace gigwms
