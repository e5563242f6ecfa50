#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "bundleflow/baselines.hpp"
#include "bundleflow/checkpoint.hpp"
#include "bundleflow/config.hpp"
#include "bundleflow/eval.hpp"

namespace fs = std::filesystem;
using namespace bundleflow;

namespace {

// Relative paths hang off $BUNDLEFLOW_OUT when it is set, so batch runs can
// redirect every artifact without touching configs.
std::string resolve_root(const std::string& dir) {
    if (fs::path(dir).is_absolute()) return dir;
    const char* root = std::getenv("BUNDLEFLOW_OUT");
    if (root && *root) return (fs::path(root) / dir).string();
    return dir;
}

void require_exists(const fs::path& path, const std::string& what) {
    if (!fs::exists(path)) throw IoError("missing " + what + ": " + path.string());
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!text.empty() && text.back() != '\n') out << '\n';
}

void write_effective_config(const RunConfig& cfg, const fs::path& dir) {
    write_text(dir / "config.effective.json", cfg.to_json());
}

ValuationDataset load_split(const RunConfig& cfg, const char* name) {
    const fs::path dir = resolve_root(cfg.data.dir);
    const fs::path file = dir / (std::string(name) + ".jsonl");
    require_exists(file, std::string(name) + " dataset");
    ValuationDataset ds = load_jsonl(file.string());
    if (ds.config.m != cfg.auction.m)
        throw ConfigError("dataset " + file.string() + " has m=" +
                          std::to_string(ds.config.m) + " but config says m=" +
                          std::to_string(cfg.auction.m));
    return ds;
}

std::string resolve_vf_ref(const fs::path& checkpoint, const std::string& ref) {
    fs::path p(ref);
    if (p.is_relative()) {
        const fs::path local = checkpoint.parent_path() / p;
        if (fs::exists(local)) return local.string();
    }
    return p.string();
}

std::ofstream open_log(const fs::path& path, bool append, const char* header) {
    std::ofstream out(path, append ? std::ios::app : std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    if (!append) out << header << '\n';
    return out;
}

int cmd_gen_data(const RunConfig& cfg) {
    const fs::path dir = resolve_root(cfg.data.dir);
    fs::create_directories(dir);

    ValuationDataset full;
    std::string source = "synthetic";
    if (!cfg.data.cats_path.empty()) {
        require_exists(cfg.data.cats_path, "CATS input");
        full = fs::is_directory(cfg.data.cats_path) ? load_cats_dir(cfg.data.cats_path)
                                                    : load_cats(cfg.data.cats_path);
        source = cfg.data.cats_path;
    } else {
        full = generate_synthetic(cfg.auction, cfg.synthetic, cfg.data.seed);
    }
    auto [train, test] = split(full, cfg.data.train_fraction, cfg.data.seed);
    save_jsonl(train, (dir / "train.jsonl").string());
    save_jsonl(test, (dir / "test.jsonl").string());

    nlohmann::json meta = {{"m", full.config.m},
                           {"v_max", full.config.v_max},
                           {"source", source},
                           {"count", full.samples.size()},
                           {"train_count", train.samples.size()},
                           {"test_count", test.samples.size()},
                           {"train_fraction", cfg.data.train_fraction},
                           {"seed", cfg.data.seed}};
    write_text(dir / "metadata.json", meta.dump(2));
    write_effective_config(cfg, dir);

    std::cout << "wrote " << train.samples.size() << " train / " << test.samples.size()
              << " test samples to " << dir.string() << '\n';
    return 0;
}

int cmd_train_flow(const RunConfig& cfg, bool resume, std::size_t iterations_override) {
    const fs::path out = resolve_root(cfg.out_dir);
    fs::create_directories(out);
    write_effective_config(cfg, out);

    const fs::path session_path = out / "flow_session.ckpt";
    std::optional<FlowTrainingSession> session;
    if (resume) {
        require_exists(session_path, "flow session checkpoint");
        session = FlowTrainingSession::resume(session_path.string());
    } else {
        session.emplace(cfg.stage1, cfg.flow, cfg.auction.m);
    }

    std::ofstream csv = open_log(out / "flow_train.csv", resume, "iteration,loss,wall_ms");
    const std::size_t target =
        iterations_override ? iterations_override : cfg.stage1.iterations;
    session->run_until(target, &csv);

    session->save(session_path.string());
    save_vector_field((out / "field.ckpt").string(), session->field(), cfg.flow.horizon);
    std::cout << "flow training stopped at iteration " << session->iteration() << ", loss "
              << g17(session->last_loss()) << '\n';
    return 0;
}

int cmd_train_menu(const RunConfig& cfg, bool resume, std::size_t iterations_override) {
    const fs::path out = resolve_root(cfg.out_dir);
    fs::create_directories(out);
    write_effective_config(cfg, out);

    const fs::path field_path = out / "field.ckpt";
    require_exists(field_path, "vector-field checkpoint");
    const ValuationDataset train = load_split(cfg, "train");
    const ValuationDataset test = load_split(cfg, "test");

    const fs::path session_path = out / "menu_session.ckpt";
    std::optional<MenuTrainingSession> session;
    if (resume) {
        require_exists(session_path, "menu session checkpoint");
        session = MenuTrainingSession::resume(session_path.string(), train);
    } else {
        auto [vf, horizon] = load_vector_field(field_path.string());
        FlowConfig fcfg = cfg.flow;
        fcfg.horizon = horizon;
        session.emplace(cfg.menu, vf, fcfg, train, cfg.auction.v_max);
    }

    std::ofstream csv = open_log(out / "menu_train.csv", resume,
                                 "iteration,loss,lambda,test_revenue,wall_ms");
    const std::size_t target =
        iterations_override ? iterations_override : cfg.menu.iterations;

    if (cfg.snapshot_interval > 0) {
        fs::create_directories(out / "snapshots");
        while (session->iteration() < target) {
            const std::size_t next = std::min(
                target,
                (session->iteration() / cfg.snapshot_interval + 1) * cfg.snapshot_interval);
            session->run_until(next, &csv, &test);
            const fs::path snap =
                out / "snapshots" / ("menu_" + std::to_string(session->iteration()) + ".ckpt");
            save_menu(snap.string(), session->menu(), cfg.menu.mode, "../field.ckpt");
        }
    } else {
        session->run_until(target, &csv, &test);
    }

    session->save(session_path.string());
    save_menu((out / "menu.ckpt").string(), session->menu(), cfg.menu.mode, "field.ckpt");

    FlowMenuMechanism mech(session->menu(), session->field(), session->flow_config(),
                           cfg.menu.mode);
    EvalConfig ecfg;
    ecfg.workers = cfg.workers;
    const EvalReport report = evaluate_mechanism(mech, test, ecfg);
    write_text(out / "menu_eval.json", report.to_json());
    std::cout << "menu training stopped at iteration " << session->iteration()
              << ", test revenue " << g17(report.revenue) << '\n';
    return 0;
}

int cmd_train_baseline(const RunConfig& cfg, const std::string& which_override) {
    RunConfig local = cfg;
    if (!which_override.empty()) local.baseline.which = which_override;
    local.baseline.validate();
    const std::string which = local.baseline.which;

    const fs::path out = resolve_root(local.out_dir);
    fs::create_directories(out);
    write_effective_config(local, out);

    const ValuationDataset train = load_split(local, "train");
    const ValuationDataset test = load_split(local, "test");
    const std::size_t m = local.auction.m;
    const double v_max = local.auction.v_max;

    const fs::path ckpt = out / ("baseline_" + which + ".ckpt");
    nlohmann::json extra = nlohmann::json::object();
    std::unique_ptr<Mechanism> mech;

    if (which == "grand") {
        const GrandBundleResult res = grand_bundle_search(train, test);
        FixedAllocationMenu menu = make_posted_price_menu(m, res.price);
        save_fixed_menu(ckpt.string(), menu);
        extra["price"] = res.price;
        extra["train_objective"] = res.train_revenue;
        mech = std::make_unique<FixedMenuMechanism>(std::move(menu));
    } else if (which == "big" || which == "small") {
        FixedAllocationMenu menu =
            which == "big"
                ? build_big_bundle_menu(m, local.baseline.menu_size,
                                        local.baseline.build_seed, &std::cerr)
                : build_small_bundle_menu(m, local.baseline.menu_size,
                                          local.baseline.build_seed, &std::cerr);
        std::ofstream csv = open_log(out / ("baseline_" + which + "_train.csv"), false,
                                     "iteration,loss,lambda,wall_ms");
        train_fixed_prices(menu, local.baseline.price, train, v_max, &csv);
        save_fixed_menu(ckpt.string(), menu);
        mech = std::make_unique<FixedMenuMechanism>(std::move(menu));
    } else {
        std::ofstream csv = open_log(out / "baseline_rochetnet_train.csv", false,
                                     "iteration,loss,tau,wall_ms");
        RochetNetResult res = train_bundle_rochetnet(local.baseline.rochet, train, v_max, &csv);
        save_product_menu(ckpt.string(), res.menu, res.binary_converged);
        extra["certified_dsic"] = res.binary_converged;
        mech = std::make_unique<ProductMenuMechanism>(std::move(res.menu),
                                                      res.binary_converged);
    }

    EvalConfig ecfg;
    ecfg.workers = local.workers;
    const EvalReport report = evaluate_mechanism(*mech, test, ecfg);
    nlohmann::json j = nlohmann::json::parse(report.to_json());
    j.update(extra);
    write_text(out / ("baseline_" + which + "_eval.json"), j.dump(2));
    std::cout << which << " baseline test revenue " << g17(report.revenue) << '\n';
    return 0;
}

int cmd_evaluate(const RunConfig& cfg, const std::string& checkpoint_arg) {
    const std::string checkpoint = resolve_root(checkpoint_arg);
    require_exists(checkpoint, "checkpoint");
    const ValuationDataset test = load_split(cfg, "test");

    BinReader r = BinReader::from_file(checkpoint);
    const CheckpointKind kind = read_checkpoint_header(r);

    std::unique_ptr<Mechanism> mech;
    nlohmann::json extra = nlohmann::json::object();
    if (kind == CheckpointKind::Menu) {
        MenuCheckpoint mc = read_menu(r);
        const std::string field_path = resolve_vf_ref(checkpoint, mc.vf_ref);
        require_exists(field_path, "vector-field checkpoint");
        auto [vf, horizon] = load_vector_field(field_path);
        FlowConfig fcfg = cfg.flow;
        fcfg.horizon = horizon;
        mech = std::make_unique<FlowMenuMechanism>(std::move(mc.menu), vf, fcfg, mc.mode);
    } else if (kind == CheckpointKind::FixedMenu) {
        mech = std::make_unique<FixedMenuMechanism>(load_fixed_menu(checkpoint));
    } else if (kind == CheckpointKind::ProductMenu) {
        auto [menu, converged] = load_product_menu(checkpoint);
        extra["certified_dsic"] = converged;
        mech = std::make_unique<ProductMenuMechanism>(std::move(menu), converged);
    } else {
        throw ConfigError("checkpoint " + checkpoint + " holds training state, not a menu; "
                          "pass menu.ckpt or a baseline checkpoint");
    }

    EvalConfig ecfg;
    ecfg.workers = cfg.workers;
    const EvalReport report = evaluate_mechanism(*mech, test, ecfg);
    nlohmann::json j = nlohmann::json::parse(report.to_json());
    j.update(extra);
    const std::string text = j.dump(2);

    const fs::path out = resolve_root(cfg.out_dir);
    fs::create_directories(out);
    write_text(out / ("eval_" + mech->id() + ".json"), text);
    std::cout << text << '\n';
    return 0;
}

int cmd_sweep(const RunConfig& cfg, const std::string& param_name,
              const std::vector<std::size_t>& values, std::size_t seed_count) {
    if (param_name != "D" && param_name != "K")
        throw ConfigError("sweep param must be D or K, got " + param_name);
    if (values.empty()) throw ConfigError("sweep needs at least one value");
    const SweepParam param = param_name == "D" ? SweepParam::D : SweepParam::K;

    const fs::path out = resolve_root(cfg.out_dir);
    fs::create_directories(out);
    write_effective_config(cfg, out);
    const fs::path field_path = out / "field.ckpt";
    require_exists(field_path, "vector-field checkpoint");
    const ValuationDataset train = load_split(cfg, "train");
    const ValuationDataset test = load_split(cfg, "test");

    auto [vf, horizon] = load_vector_field(field_path.string());
    FlowConfig fcfg = cfg.flow;
    fcfg.horizon = horizon;

    std::vector<std::uint64_t> seeds;
    for (std::size_t i = 0; i < seed_count; ++i) seeds.push_back(cfg.menu.seed + i);

    std::ofstream csv(out / ("sweep_" + param_name + ".csv"), std::ios::trunc);
    if (!csv) throw IoError("cannot write sweep CSV");
    const SweepResult res = ablation_sweep(param, values, cfg.menu, vf, fcfg, train, test,
                                           cfg.auction.v_max, seeds, &csv);
    for (std::size_t i = 0; i < res.values.size(); ++i)
        std::cout << param_name << "=" << res.values[i] << " median revenue "
                  << g17(res.medians[i]) << '\n';
    return 0;
}

int cmd_export_snapshots(const RunConfig& cfg, const std::string& run_override,
                         std::size_t axis_i, std::size_t axis_j, std::size_t resolution) {
    const fs::path run =
        run_override.empty() ? fs::path(resolve_root(cfg.out_dir)) : fs::path(run_override);
    require_exists(run, "run directory");
    const ValuationDataset test = load_split(cfg, "test");

    std::vector<std::pair<std::size_t, fs::path>> found;
    const fs::path snap_dir = run / "snapshots";
    if (fs::exists(snap_dir)) {
        for (const auto& entry : fs::directory_iterator(snap_dir)) {
            const std::string name = entry.path().filename().string();
            if (name.rfind("menu_", 0) != 0 || entry.path().extension() != ".ckpt") continue;
            const std::string digits = name.substr(5, name.size() - 5 - 5);
            found.emplace_back(std::stoull(digits), entry.path());
        }
    }
    std::sort(found.begin(), found.end());

    std::map<std::string, std::pair<VectorField, double>> field_cache;
    for (const auto& [iter, path] : found) {
        MenuCheckpoint mc = load_menu(path.string());
        const std::string field_path = resolve_vf_ref(path, mc.vf_ref);
        require_exists(field_path, "vector-field checkpoint");
        auto it = field_cache.find(field_path);
        if (it == field_cache.end())
            it = field_cache.emplace(field_path, load_vector_field(field_path)).first;
        FlowConfig fcfg = cfg.flow;
        fcfg.horizon = it->second.second;
        const Snapshot snap =
            make_snapshot(mc.menu, it->second.first, fcfg, mc.mode, test, iter);
        write_text(snap_dir / (std::to_string(iter) + ".json"), snap.to_json());
    }

    const fs::path field_path = run / "field.ckpt";
    require_exists(field_path, "vector-field checkpoint");
    auto [vf, horizon] = load_vector_field(field_path.string());
    std::ofstream grid(run / "field_grid.csv", std::ios::trunc);
    if (!grid) throw IoError("cannot write field grid CSV");
    write_field_grid_csv(vf, axis_i, axis_j, resolution, grid);

    std::cout << "exported " << found.size() << " snapshots from " << run.string() << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"BundleFlow: menu learning for single-bidder combinatorial auctions"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_override;
    std::size_t workers_override = 0;
    app.add_option("-c,--config", config_path, "JSON run config")->required();
    app.add_option("--out", out_override, "override out_dir from the config");
    app.add_option("--workers", workers_override, "override evaluation worker count");

    auto* gen = app.add_subcommand("gen-data", "generate or import a valuation dataset");

    bool flow_resume = false;
    std::size_t flow_iters = 0;
    auto* tf = app.add_subcommand("train-flow", "stage 1: rectified-flow vector field");
    tf->add_flag("--resume", flow_resume, "continue from flow_session.ckpt");
    tf->add_option("--iterations", flow_iters, "override stage1.iterations");

    bool menu_resume = false;
    std::size_t menu_iters = 0;
    auto* tm = app.add_subcommand("train-menu", "stage 2: menu prices and mixtures");
    tm->add_flag("--resume", menu_resume, "continue from menu_session.ckpt");
    tm->add_option("--iterations", menu_iters, "override menu.iterations");

    std::string which;
    auto* tb = app.add_subcommand("train-baseline", "grand | big | small | rochetnet");
    tb->add_option("--which", which, "override baseline.which");

    std::string checkpoint;
    auto* ev = app.add_subcommand("evaluate", "revenue + DSIC/IR report for a checkpoint");
    ev->add_option("--checkpoint", checkpoint, "menu or baseline checkpoint")->required();

    std::string sweep_param;
    std::vector<std::size_t> sweep_values;
    std::size_t sweep_seeds = 3;
    auto* sw = app.add_subcommand("sweep", "ablation over D or K");
    sw->add_option("--param", sweep_param, "D or K")->required();
    sw->add_option("--values", sweep_values, "comma-separated values")
        ->required()
        ->delimiter(',');
    sw->add_option("--seeds", sweep_seeds, "number of seeds (menu.seed + 0..n-1)");

    std::string run_dir;
    std::size_t axis_i = 0, axis_j = 1, grid_res = 25;
    auto* ex = app.add_subcommand("export-snapshots", "snapshot JSON + field grid CSV");
    ex->add_option("--run", run_dir, "run directory (default: out_dir)");
    ex->add_option("--axis-i", axis_i, "first item axis for the field grid");
    ex->add_option("--axis-j", axis_j, "second item axis for the field grid");
    ex->add_option("--resolution", grid_res, "field grid resolution per axis");

    CLI11_PARSE(app, argc, argv);

    try {
        RunConfig cfg = RunConfig::from_file(config_path);
        if (!out_override.empty()) cfg.out_dir = out_override;
        if (workers_override > 0) cfg.workers = workers_override;

        if (gen->parsed()) return cmd_gen_data(cfg);
        if (tf->parsed()) return cmd_train_flow(cfg, flow_resume, flow_iters);
        if (tm->parsed()) return cmd_train_menu(cfg, menu_resume, menu_iters);
        if (tb->parsed()) return cmd_train_baseline(cfg, which);
        if (ev->parsed()) return cmd_evaluate(cfg, checkpoint);
        if (sw->parsed()) return cmd_sweep(cfg, sweep_param, sweep_values, sweep_seeds);
        if (ex->parsed()) return cmd_export_snapshots(cfg, run_dir, axis_i, axis_j, grid_res);
        return 1;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const ParseError& e) {
        std::cerr << "parse error: " << e.what() << '\n';
        return 3;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << '\n';
        return 4;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << '\n';
        return 5;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
