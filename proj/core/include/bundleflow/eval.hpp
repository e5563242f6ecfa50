#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "bundleflow/baselines.hpp"
#include "bundleflow/menu.hpp"

namespace bundleflow {

/// A single-bidder mechanism under test. Selection always goes through
/// hard_select on utilities(bid); exact_utilities is the bidder's true payoff
/// surface and differs from utilities only when the mechanism estimates
/// values by sampling.
class Mechanism {
public:
    virtual ~Mechanism() = default;
    virtual std::string id() const = 0;
    virtual std::size_t element_count() const = 0;
    virtual UtilityVector utilities(const XorValuation& bid) const = 0;
    virtual UtilityVector exact_utilities(const XorValuation& v) const { return utilities(v); }
};

/// Flow menu with per-element supports precomputed once (the menu is frozen
/// during evaluation, so transports need not repeat per bid).
class FlowMenuMechanism : public Mechanism {
public:
    FlowMenuMechanism(Menu menu, const VectorField& vf, const FlowConfig& cfg,
                      ReweightMode mode);

    std::string id() const override { return "bundleflow"; }
    std::size_t element_count() const override { return menu_.size(); }
    UtilityVector utilities(const XorValuation& bid) const override;

    const Menu& menu() const { return menu_; }
    const std::vector<std::vector<std::pair<Bundle, double>>>& supports() const {
        return supports_;
    }

private:
    Menu menu_;
    std::vector<std::vector<std::pair<Bundle, double>>> supports_;
};

class FixedMenuMechanism : public Mechanism {
public:
    explicit FixedMenuMechanism(FixedAllocationMenu menu) : menu_(std::move(menu)) {}

    std::string id() const override { return menu_.id; }
    std::size_t element_count() const override {
        return menu_.priced_count() + (menu_.include_null ? 1 : 0);
    }
    UtilityVector utilities(const XorValuation& bid) const override {
        return fixed_menu_utilities(menu_, bid);
    }

    const FixedAllocationMenu& menu() const { return menu_; }

private:
    FixedAllocationMenu menu_;
};

/// Product menu evaluated with exact expectations (m <= 20).
class ProductMenuMechanism : public Mechanism {
public:
    explicit ProductMenuMechanism(ProductMenu menu, bool certified)
        : menu_(std::move(menu)), certified_(certified) {}

    std::string id() const override { return menu_.id; }
    std::size_t element_count() const override { return menu_.priced_count() + 1; }
    UtilityVector utilities(const XorValuation& bid) const override {
        return product_menu_utilities(menu_, bid);
    }
    bool certified_dsic() const { return certified_; }

    const ProductMenu& menu() const { return menu_; }

private:
    ProductMenu menu_;
    bool certified_;
};

/// Product menu whose selection uses fresh Gumbel value estimates, as during
/// training. Its exact_utilities stay exact, so the probe suite can exhibit
/// the estimator's truthfulness gap.
class SampledProductMechanism : public Mechanism {
public:
    SampledProductMechanism(ProductMenu menu, double tau, std::size_t draws,
                            std::uint64_t seed)
        : menu_(std::move(menu)), tau_(tau), draws_(draws), seed_(seed) {}

    std::string id() const override { return menu_.id + "-sampled"; }
    std::size_t element_count() const override { return menu_.priced_count() + 1; }
    UtilityVector utilities(const XorValuation& bid) const override;
    UtilityVector exact_utilities(const XorValuation& v) const override {
        return product_menu_utilities(menu_, v);
    }

private:
    ProductMenu menu_;
    double tau_;
    std::size_t draws_;
    std::uint64_t seed_;
};

double test_revenue(const Mechanism& mech, const ValuationDataset& test,
                    std::size_t workers = 1);

struct DsicReport {
    std::size_t probes = 0;
    std::size_t violations = 0;
    double worst_violation = 0.0;  // max excess over the truthful utility
    double pass_rate = 1.0;
};

/// For each valuation, misreports cycle through three generators: per-atom
/// price scaling U[0.5,2], atom dropout at rate 0.3, and swapping in another
/// sample wholesale. Utilities of the chosen element are measured under the
/// true valuation via exact_utilities.
DsicReport dsic_probe(const Mechanism& mech, const std::vector<XorValuation>& samples,
                      std::size_t misreports_per_sample, std::uint64_t seed,
                      double tolerance = 1e-12, std::size_t workers = 1);

struct IrReport {
    std::size_t probes = 0;
    std::size_t violations = 0;
    double worst_shortfall = 0.0;  // most negative chosen utility, as a positive number
    double pass_rate = 1.0;
};

IrReport ir_check(const Mechanism& mech, const std::vector<XorValuation>& samples,
                  double tolerance = 1e-12, std::size_t workers = 1);

struct EvalConfig {
    std::size_t dsic_misreports = 16;  // per test sample
    std::uint64_t seed = 7;
    double tolerance = 1e-12;
    std::size_t workers = 1;
};

struct EvalReport {
    std::string mechanism;
    double revenue = 0.0;
    std::vector<double> selection_freq;  // one entry per element
    DsicReport dsic;
    IrReport ir;
    double wall_ms = 0.0;

    std::string to_json() const;
};

EvalReport evaluate_mechanism(const Mechanism& mech, const ValuationDataset& test,
                              const EvalConfig& cfg);

/// Independent check of the fast element_value path: every Dirac point is
/// re-transported at 4x Euler resolution with per-point weights and a direct
/// weighted sum. Components whose rounded bundle differs between resolutions
/// are boundary cases (reported, excluded from the gap).
struct OracleElementCheck {
    double fast = 0.0;
    double oracle = 0.0;
    double rel_gap = 0.0;
    bool boundary = false;
};

struct OracleCaseReport {
    std::vector<OracleElementCheck> elements;
    std::size_t boundary_components = 0;
    std::size_t total_components = 0;
    double max_rel_gap = 0.0;  // over non-boundary elements
};

OracleCaseReport oracle_compare(const Menu& menu, const VectorField& vf,
                                const FlowConfig& cfg, const XorValuation& v,
                                ReweightMode mode);

/// Oracle-path utilities (value - beta, null pinned to 0); m capped at 12.
UtilityVector brute_force_menu_oracle(const Menu& menu, const VectorField& vf,
                                      const FlowConfig& cfg, const XorValuation& v,
                                      ReweightMode mode);

enum class SweepParam { D, K };

SweepParam parse_sweep_param(const std::string& name);

struct SweepResult {
    SweepParam param = SweepParam::D;
    std::vector<std::size_t> values;
    std::vector<std::vector<double>> revenues;  // [value][seed]
    std::vector<double> medians;                // per value
};

/// Trains one menu per (value, seed) against a shared frozen field and
/// reports hard-select test revenue. CSV layout: value, per-seed revenues,
/// median.
SweepResult ablation_sweep(SweepParam param, const std::vector<std::size_t>& values,
                           const MenuConfig& base, const VectorField& vf,
                           const FlowConfig& fcfg, const ValuationDataset& train,
                           const ValuationDataset& test, double v_max,
                           const std::vector<std::uint64_t>& seeds,
                           std::ostream* csv = nullptr);

struct SnapshotElement {
    double beta = 0.0;
    std::vector<std::pair<std::string, double>> support;  // bundle bits -> weight
};

struct Snapshot {
    std::size_t iteration = 0;
    double test_revenue = 0.0;
    std::vector<SnapshotElement> elements;

    std::string to_json() const;
};

Snapshot make_snapshot(const Menu& menu, const VectorField& vf, const FlowConfig& cfg,
                       ReweightMode mode, const ValuationDataset& test,
                       std::size_t iteration);

/// Drift field on a 2-D slice lattice: items (i, j) swept over [0,1]^2 at the
/// given resolution, all other coordinates pinned at 0.5, field evaluated at
/// t = 0. CSV rows: x, y, dx, dy.
void write_field_grid_csv(const VectorField& vf, std::size_t item_i, std::size_t item_j,
                          std::size_t resolution, std::ostream& out);

double median(std::vector<double> xs);

}  // namespace bundleflow
