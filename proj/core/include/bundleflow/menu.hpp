#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "bundleflow/flow.hpp"
#include "bundleflow/net.hpp"
#include "bundleflow/valuation.hpp"

namespace bundleflow {

/// How the Liouville factor exp(-tr Q(mu_d) * integral eta) enters the
/// per-element support weights. Normalized renormalizes the reweighted
/// mixture to a probability distribution (default); PaperLiteral keeps the
/// raw products, whose sum is unconstrained.
enum class ReweightMode { Normalized, PaperLiteral };

ReweightMode parse_reweight_mode(const std::string& name);
std::string to_string(ReweightMode mode);

/// Point-mass mixture over start points. Weights are softmax of the logits.
/// D = 0 encodes the null allocation (nothing transported, value 0).
struct DiracMixture {
    Vec weight_logits;
    std::vector<Vec> means;

    std::size_t support_size() const { return means.size(); }
    Vec weights() const;  // softmax of logits
};

struct MenuElement {
    double beta = 0.0;
    DiracMixture mixture;
};

struct Menu {
    std::vector<MenuElement> elements;
    std::size_t null_index = 0;
    std::size_t m = 0;

    std::size_t size() const { return elements.size(); }
    void validate() const;
};

/// K-element menu with the null element in the last slot: beta 0, empty
/// allocation, untouched by training. Non-null elements get beta uniform on
/// [0, 0.1 v_max], zero logits, means uniform on [0,1]^m.
Menu init_menu(std::size_t K, std::size_t D, std::size_t m, double v_max, Rng& rng);

struct UtilityVector {
    Vec values;
    Vec utilities;  // value - price; exactly 0 at null_index
    Vec prices;
    std::size_t null_index = 0;
};

struct SelectionResult {
    Vec soft;              // z over elements (training path)
    std::size_t hard = 0;  // argmax index (test path)
    double payment = 0.0;
};

/// Pushforward of one element's mixture: per component, the transported
/// rounded bundle and its effective weight. Duplicate bundles are merged.
std::vector<std::pair<Bundle, double>> element_support(const MenuElement& elem,
                                                       const VectorField& vf,
                                                       const FlowConfig& cfg,
                                                       ReweightMode mode,
                                                       const EtaTable& table);
std::vector<std::pair<Bundle, double>> element_support(const MenuElement& elem,
                                                       const VectorField& vf,
                                                       const FlowConfig& cfg,
                                                       ReweightMode mode);

/// Expected valuation of the element's pushforward under v. In normalized
/// mode this is a true expectation; in paper-literal mode the raw weighted
/// sum (weights need not total 1).
double element_value(const MenuElement& elem, const XorValuation& v, const VectorField& vf,
                     const FlowConfig& cfg, ReweightMode mode);

UtilityVector utilities(const Menu& menu, const XorValuation& v, const VectorField& vf,
                        const FlowConfig& cfg, ReweightMode mode);

/// Softmax over lambda * utilities, stabilized by max subtraction.
Vec soft_select(const UtilityVector& uv, double lambda);

/// Argmax with lowest-index tie-break. The null element's zero utility
/// guarantees the chosen utility is never negative.
SelectionResult hard_select(const UtilityVector& uv);

SelectionResult menu_payment(const Menu& menu, const XorValuation& bid,
                             const VectorField& vf, const FlowConfig& cfg,
                             ReweightMode mode);

// Trainable parameters are the non-null elements' (beta, logits, means),
// packed per element in that order into one flat vector.
std::size_t menu_param_count(const Menu& menu);
Vec pack_menu_params(const Menu& menu);
void unpack_menu_params(Menu& menu, const Vec& params);

/// Rounded transported bundle per (element, component), held fixed while the
/// continuous parts of the loss are differentiated or probed.
struct FrozenSupport {
    std::vector<std::vector<Bundle>> bundles;  // [element][component]
};

FrozenSupport freeze_support(const Menu& menu, const VectorField& vf, const FlowConfig& cfg);

/// -1/|batch| sum_v sum_k z_k(v) beta_k with z = soft_select at lambda.
double revenue_loss(const Menu& menu, const FrozenSupport& support,
                    const std::vector<XorValuation>& batch, const VectorField& vf,
                    const FlowConfig& cfg, double lambda, ReweightMode mode);
double revenue_loss(const Menu& menu, const std::vector<XorValuation>& batch,
                    const VectorField& vf, const FlowConfig& cfg, double lambda,
                    ReweightMode mode);

/// Loss plus its gradient in pack_menu_params layout. Bundles come from the
/// frozen support, so the indicator contributes no gradient; means learn
/// through the trace factor only.
double revenue_loss_grad(const Menu& menu, const FrozenSupport& support,
                         const std::vector<XorValuation>& batch, const VectorField& vf,
                         const FlowConfig& cfg, double lambda, ReweightMode mode,
                         Vec& grad);

struct MenuConfig {
    std::size_t K = 64;  // total elements including the null slot
    std::size_t D = 8;
    double lr = 0.3;
    std::size_t iterations = 1000;
    std::size_t batch_size = 32;
    double lambda_start = 0.001;
    double lambda_end = 0.2;
    ReweightMode mode = ReweightMode::Normalized;
    std::uint64_t seed = 1;
    std::size_t eval_interval = 0;  // hard-select test revenue every N iters; 0 = never

    void validate() const;
};

/// Linear anneal over the configured iteration count.
double lambda_at(const MenuConfig& cfg, std::size_t iteration);

/// Stage-2 optimizer. The vector field is frozen: its parameters are carried
/// along for evaluation but never receive gradient.
class MenuTrainingSession {
public:
    MenuTrainingSession(const MenuConfig& cfg, const VectorField& vf, const FlowConfig& fcfg,
                        const ValuationDataset& train, double v_max);

    static MenuTrainingSession resume(const std::string& checkpoint_path,
                                      const ValuationDataset& train);

    /// CSV rows "iteration,loss,lambda,test_revenue,wall_ms"; test_revenue is
    /// blank except every eval_interval iterations (when test is non-null).
    void run_until(std::size_t target_iteration, std::ostream* log = nullptr,
                   const ValuationDataset* test = nullptr);

    void save(const std::string& path) const;

    const Menu& menu() const { return menu_; }
    const VectorField& field() const { return vf_; }
    const FlowConfig& flow_config() const { return fcfg_; }
    const MenuConfig& config() const { return cfg_; }
    std::size_t iteration() const { return iteration_; }
    double last_loss() const { return last_loss_; }

private:
    MenuTrainingSession() = default;

    MenuConfig cfg_;
    FlowConfig fcfg_;
    VectorField vf_;
    Menu menu_;
    AdamState adam_;
    Rng rng_;
    const ValuationDataset* train_ = nullptr;
    std::size_t iteration_ = 0;
    double last_loss_ = 0.0;
};

Menu train_menu(const MenuConfig& cfg, const VectorField& vf, const FlowConfig& fcfg,
                const ValuationDataset& train, double v_max, std::ostream* log = nullptr,
                const ValuationDataset* test = nullptr);

/// Mean hard-select payment over a dataset.
double menu_test_revenue(const Menu& menu, const ValuationDataset& ds, const VectorField& vf,
                         const FlowConfig& cfg, ReweightMode mode);

// Menu checkpoints: payload carries the menu plus a reference (path string)
// to the vector-field checkpoint it was trained against.
void save_menu(const std::string& path, const Menu& menu, ReweightMode mode,
               const std::string& vf_ref);
struct MenuCheckpoint {
    Menu menu;
    ReweightMode mode = ReweightMode::Normalized;
    std::string vf_ref;
};
MenuCheckpoint load_menu(const std::string& path);

void write_menu(BinWriter& w, const Menu& menu, ReweightMode mode, const std::string& vf_ref);
MenuCheckpoint read_menu(BinReader& r);

}  // namespace bundleflow
