#include "bundleflow/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace bundleflow {

namespace {

using nlohmann::json;

// Rejects keys that no reader claimed, so config typos surface as errors
// naming the field instead of silently taking defaults.
class Section {
public:
    Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
        if (!j.is_object()) throw ConfigError(name_ + " must be a JSON object");
    }

    template <typename T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        auto it = j_.find(key);
        if (it == j_.end()) return;
        try {
            out = it->get<T>();
        } catch (const json::exception&) {
            throw ConfigError(name_ + "." + key + " has the wrong type");
        }
    }

    bool has(const char* key) {
        seen_.insert(key);
        return j_.contains(key);
    }

    const json* sub(const char* key) {
        seen_.insert(key);
        auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.count(it.key()))
                throw ConfigError("unknown config field: " + name_ + "." + it.key());
    }

private:
    const json& j_;
    std::string name_;
    std::set<std::string> seen_;
};

}  // namespace

void DataConfig::validate() const {
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw ConfigError("data.train_fraction must be in (0,1)");
    if (dir.empty()) throw ConfigError("data.dir must be set");
}

void BaselineConfig::validate() const {
    if (which != "grand" && which != "big" && which != "small" && which != "rochetnet")
        throw ConfigError("baseline.which must be grand, big, small, or rochetnet");
    if (menu_size < 1) throw ConfigError("baseline.menu_size must be >= 1");
    price.validate();
    rochet.validate();
}

void RunConfig::validate() const {
    auction.validate();
    data.validate();
    flow.validate();
    stage1.validate(auction.m);
    menu.validate();
    baseline.validate();
    if (synthetic.count == 0) throw ConfigError("auction.count must be >= 1");
    if (synthetic.max_atoms == 0) throw ConfigError("auction.max_atoms must be >= 1");
    if (!(synthetic.item_prob > 0.0 && synthetic.item_prob <= 1.0))
        throw ConfigError("auction.item_prob must be in (0,1]");
    if (workers == 0) throw ConfigError("workers must be >= 1");
    if (out_dir.empty()) throw ConfigError("out_dir must be set");
}

RunConfig RunConfig::from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("config is not valid JSON: ") + e.what());
    }

    RunConfig cfg;
    Section root(j, "config");

    if (const json* a = root.sub("auction")) {
        Section s(*a, "auction");
        s.get("m", cfg.auction.m);
        s.get("v_max", cfg.auction.v_max);
        std::string dist = to_string(cfg.synthetic.dist);
        s.get("distribution", dist);
        cfg.synthetic.dist = parse_price_dist(dist);
        s.get("max_atoms", cfg.synthetic.max_atoms);
        s.get("item_prob", cfg.synthetic.item_prob);
        s.get("count", cfg.synthetic.count);
        s.finish();
    }
    if (const json* d = root.sub("data")) {
        Section s(*d, "data");
        s.get("dir", cfg.data.dir);
        s.get("train_fraction", cfg.data.train_fraction);
        s.get("seed", cfg.data.seed);
        s.get("cats_path", cfg.data.cats_path);
        s.finish();
    }
    if (const json* f = root.sub("flow")) {
        Section s(*f, "flow");
        s.get("horizon", cfg.flow.horizon);
        s.get("euler_steps", cfg.flow.euler_steps);
        s.get("eta_grid", cfg.flow.eta_grid);
        s.finish();
    }
    if (const json* st = root.sub("stage1")) {
        Section s(*st, "stage1");
        s.get("sigma_z", cfg.stage1.sigma_z);
        s.get("batch_size", cfg.stage1.batch_size);
        s.get("iterations", cfg.stage1.iterations);
        s.get("lr", cfg.stage1.lr);
        s.get("seed", cfg.stage1.seed);
        s.get("q_hidden", cfg.stage1.q_hidden);
        s.get("eta_hidden", cfg.stage1.eta_hidden);
        s.finish();
    }
    if (const json* mn = root.sub("menu")) {
        Section s(*mn, "menu");
        s.get("K", cfg.menu.K);
        s.get("D", cfg.menu.D);
        s.get("lr", cfg.menu.lr);
        s.get("iterations", cfg.menu.iterations);
        s.get("batch_size", cfg.menu.batch_size);
        s.get("lambda_start", cfg.menu.lambda_start);
        s.get("lambda_end", cfg.menu.lambda_end);
        std::string mode = to_string(cfg.menu.mode);
        s.get("mode", mode);
        cfg.menu.mode = parse_reweight_mode(mode);
        s.get("seed", cfg.menu.seed);
        s.get("eval_interval", cfg.menu.eval_interval);
        s.get("snapshot_interval", cfg.snapshot_interval);
        s.finish();
    }
    if (const json* b = root.sub("baseline")) {
        Section s(*b, "baseline");
        s.get("which", cfg.baseline.which);
        s.get("menu_size", cfg.baseline.menu_size);
        s.get("build_seed", cfg.baseline.build_seed);
        if (const json* p = s.sub("price")) {
            Section ps(*p, "baseline.price");
            ps.get("lr", cfg.baseline.price.lr);
            ps.get("lambda_start", cfg.baseline.price.lambda_start);
            ps.get("lambda_end", cfg.baseline.price.lambda_end);
            ps.get("iterations", cfg.baseline.price.iterations);
            ps.get("batch_size", cfg.baseline.price.batch_size);
            ps.get("seed", cfg.baseline.price.seed);
            ps.get("init_scale", cfg.baseline.price.init_scale);
            ps.finish();
        }
        if (const json* rj = s.sub("rochet")) {
            Section rs(*rj, "baseline.rochet");
            rs.get("K", cfg.baseline.rochet.K);
            rs.get("lr", cfg.baseline.rochet.lr);
            rs.get("lambda", cfg.baseline.rochet.lambda);
            rs.get("tau_start", cfg.baseline.rochet.tau_start);
            rs.get("tau_end", cfg.baseline.rochet.tau_end);
            rs.get("value_samples", cfg.baseline.rochet.value_samples);
            rs.get("iterations", cfg.baseline.rochet.iterations);
            rs.get("batch_size", cfg.baseline.rochet.batch_size);
            rs.get("seed", cfg.baseline.rochet.seed);
            rs.finish();
        }
        s.finish();
    }
    root.get("out_dir", cfg.out_dir);
    root.get("workers", cfg.workers);
    root.finish();

    if (cfg.menu.K == 0) cfg.menu.K = cfg.auction.m <= 100 ? 5000 : 20000;
    cfg.validate();
    return cfg;
}

RunConfig RunConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return from_json_text(buf.str());
}

std::string RunConfig::to_json() const {
    json j;
    j["auction"] = {{"m", auction.m},
                    {"v_max", auction.v_max},
                    {"distribution", to_string(synthetic.dist)},
                    {"max_atoms", synthetic.max_atoms},
                    {"item_prob", synthetic.item_prob},
                    {"count", synthetic.count}};
    j["data"] = {{"dir", data.dir},
                 {"train_fraction", data.train_fraction},
                 {"seed", data.seed},
                 {"cats_path", data.cats_path}};
    j["flow"] = {{"horizon", flow.horizon},
                 {"euler_steps", flow.euler_steps},
                 {"eta_grid", flow.eta_grid}};
    j["stage1"] = {{"sigma_z", stage1.sigma_z}, {"batch_size", stage1.batch_size},
                   {"iterations", stage1.iterations}, {"lr", stage1.lr},
                   {"seed", stage1.seed},           {"q_hidden", stage1.q_hidden},
                   {"eta_hidden", stage1.eta_hidden}};
    j["menu"] = {{"K", menu.K},
                 {"D", menu.D},
                 {"lr", menu.lr},
                 {"iterations", menu.iterations},
                 {"batch_size", menu.batch_size},
                 {"lambda_start", menu.lambda_start},
                 {"lambda_end", menu.lambda_end},
                 {"mode", to_string(menu.mode)},
                 {"seed", menu.seed},
                 {"eval_interval", menu.eval_interval},
                 {"snapshot_interval", snapshot_interval}};
    j["baseline"] = {
        {"which", baseline.which},
        {"menu_size", baseline.menu_size},
        {"build_seed", baseline.build_seed},
        {"price",
         {{"lr", baseline.price.lr},
          {"lambda_start", baseline.price.lambda_start},
          {"lambda_end", baseline.price.lambda_end},
          {"iterations", baseline.price.iterations},
          {"batch_size", baseline.price.batch_size},
          {"seed", baseline.price.seed},
          {"init_scale", baseline.price.init_scale}}},
        {"rochet",
         {{"K", baseline.rochet.K},
          {"lr", baseline.rochet.lr},
          {"lambda", baseline.rochet.lambda},
          {"tau_start", baseline.rochet.tau_start},
          {"tau_end", baseline.rochet.tau_end},
          {"value_samples", baseline.rochet.value_samples},
          {"iterations", baseline.rochet.iterations},
          {"batch_size", baseline.rochet.batch_size},
          {"seed", baseline.rochet.seed}}}};
    j["out_dir"] = out_dir;
    j["workers"] = workers;
    return j.dump(2);
}

}  // namespace bundleflow
