#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "bundleflow/flow.hpp"
#include "bundleflow/net.hpp"

namespace bundleflow {

struct MixtureComponent {
    double weight = 1.0;
    Vec mean;
    double stdev = 0.3;
};

/// Flow-initialization hyperparameters. The source mixture is fixed for the
/// whole run; when left empty it is drawn once from the seed (8 components,
/// means uniform on [0,1]^m, stdev 0.3, equal weights).
struct Stage1Config {
    std::vector<MixtureComponent> init_mixture;
    double sigma_z = 0.05;
    std::size_t batch_size = 64;
    std::size_t iterations = 2000;
    double lr = 5e-3;
    std::uint64_t seed = 1;
    std::vector<std::size_t> q_hidden;    // empty -> architecture defaults
    std::vector<std::size_t> eta_hidden;

    void validate(std::size_t m) const;
};

std::vector<MixtureComponent> default_mixture(std::size_t m, Rng& rng);

struct TrainingPair {
    Vec s0;
    Vec s_T;
    double t = 0.0;
    Vec s_t;  // t * s_T + (1 - t) * s0
};

/// Draws s0 from the mixture, rounds it to the nearest bundle, jitters the
/// rounded target by sigma_z, and interpolates at a uniform time.
TrainingPair sample_training_pair(const Stage1Config& cfg, const FlowConfig& fcfg,
                                  std::size_t m, Rng& rng);

/// Mean over the batch of |(s_T - s0) - eta(t) Q(s0) s_t|^2.
double flow_loss(const VectorField& vf, const std::vector<TrainingPair>& batch);

/// Same loss; also accumulates d(loss)/d(params) into the two gradient
/// buffers (resized and zeroed here).
double flow_loss_grad(const VectorField& vf, const std::vector<TrainingPair>& batch,
                      Vec& q_grad, Vec& eta_grad);

/// Owns the field, optimizer moments, and RNG so a run can stop at any
/// iteration, checkpoint, and resume bit-identically.
class FlowTrainingSession {
public:
    FlowTrainingSession(const Stage1Config& cfg, const FlowConfig& fcfg, std::size_t m);

    static FlowTrainingSession resume(const std::string& checkpoint_path);

    /// Advances training to the target iteration, writing one CSV row
    /// "iteration,loss,wall_ms" per iteration when log is non-null.
    /// Throws NumericError naming the iteration if the loss goes non-finite.
    void run_until(std::size_t target_iteration, std::ostream* log = nullptr);

    void save(const std::string& path) const;

    const VectorField& field() const { return vf_; }
    const Stage1Config& config() const { return cfg_; }
    const FlowConfig& flow_config() const { return fcfg_; }
    std::size_t iteration() const { return iteration_; }
    double initial_loss() const { return initial_loss_; }
    double last_loss() const { return last_loss_; }

private:
    FlowTrainingSession() = default;

    Stage1Config cfg_;
    FlowConfig fcfg_;
    std::size_t m_ = 0;
    VectorField vf_;
    AdamState q_adam_;
    AdamState eta_adam_;
    Rng rng_;
    std::size_t iteration_ = 0;
    double initial_loss_ = 0.0;
    double last_loss_ = 0.0;
};

/// Full Stage-1 run: init (or the caller resumes via the session API), train
/// cfg.iterations steps, return the field.
VectorField train_flow(const Stage1Config& cfg, const FlowConfig& fcfg, std::size_t m,
                       std::ostream* log = nullptr);

struct CoverageReport {
    std::size_t reached = 0;
    std::size_t total = 0;                 // 2^m
    std::vector<std::uint64_t> histogram;  // counts indexed by bundle bits
    double fraction() const {
        return total ? static_cast<double>(reached) / static_cast<double>(total) : 0.0;
    }
};

/// Transports probe draws from the Stage-1 mixture and tallies the rounded
/// bundles. Enumerates 2^m cells, so m is capped at 20.
CoverageReport coverage_report(const VectorField& vf, const FlowConfig& fcfg,
                               const Stage1Config& cfg, std::size_t probe_count,
                               std::uint64_t probe_seed);

}  // namespace bundleflow
