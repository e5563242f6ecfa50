#pragma once

#include <cstddef>
#include <vector>

#include "bundleflow/common.hpp"
#include "bundleflow/net.hpp"
#include "bundleflow/valuation.hpp"

namespace bundleflow {

struct FlowConfig {
    double horizon = 1.0;        // integration runs over [0, horizon]
    std::size_t euler_steps = 8;
    std::size_t eta_grid = 33;   // trapezoid nodes for the eta integral

    void validate() const {
        if (horizon <= 0.0) throw ConfigError("horizon must be positive");
        if (euler_steps == 0) throw ConfigError("euler_steps must be positive");
        if (eta_grid < 2) throw ConfigError("eta_grid needs at least two nodes");
    }
};

/// Drift field phi(t, s; s0) = eta(t) * Q(s0) * s. The state matrix Q is a
/// function of the start point only, so along one trajectory it is constant
/// and the divergence eta(t) * tr Q(s0) depends on t only through eta.
struct VectorField {
    DenseNet qnet;   // m -> m*m, row-major matrix output
    DenseNet etanet; // 1 -> 1
    std::size_t m = 0;

    static VectorField make(std::size_t m, const std::vector<std::size_t>& q_hidden,
                            const std::vector<std::size_t>& eta_hidden, Rng& rng);

    /// Default widths: q [128,128,128] (last hidden 256 when m > 100), eta [128,128].
    static VectorField make_default(std::size_t m, Rng& rng);

    Mat q_matrix(const Vec& s0) const;
    double eta(double t) const;
};

Vec vector_field(const VectorField& vf, double t, const Vec& s, const Mat& q);
double divergence(const VectorField& vf, double t, const Mat& q);

/// Trapezoid quadrature of eta over [0, horizon] on cfg.eta_grid nodes.
double eta_integral(const VectorField& vf, const FlowConfig& cfg);

/// Eta evaluations reused across trajectories while the field is frozen:
/// values at the Euler left endpoints plus the quadrature integral.
struct EtaTable {
    Vec at_step;      // eta(k * h), k = 0..euler_steps-1
    double integral = 0.0;
    double step = 0.0;

    static EtaTable build(const VectorField& vf, const FlowConfig& cfg);
};

struct Trajectory {
    std::vector<Vec> states;  // euler_steps + 1 points, states[0] = start
    double step = 0.0;
};

/// Euler transport reusing an externally computed state matrix (callers that
/// need Q for the trace anyway avoid a second net forward).
Vec transport_with(const Mat& q, const EtaTable& table, const Vec& start);

/// Forward Euler with Q frozen at the start point and eta at left endpoints.
/// Throws NumericError naming the offending step if a state goes non-finite.
Vec ode_solve(const VectorField& vf, const FlowConfig& cfg, const Vec& start);
Vec ode_solve(const VectorField& vf, const FlowConfig& cfg, const Vec& start,
              const EtaTable& table);
Trajectory ode_trajectory(const VectorField& vf, const FlowConfig& cfg, const Vec& start);

/// log alpha_T = log alpha_0 - tr Q(s0) * integral of eta. The instantaneous
/// change-of-density along the flow integrates in closed form because the
/// divergence factorizes as eta(t) * tr Q(s0).
double log_density_transport(double log_alpha0, double trace_q, double eta_int);

/// Componentwise threshold at one half, inclusive.
Bundle round_bundle(const Vec& s);

}  // namespace bundleflow
