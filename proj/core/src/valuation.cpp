#include "bundleflow/valuation.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

namespace bundleflow {

using nlohmann::json;

XorValuation::XorValuation(std::size_t m, std::vector<XorAtom> atoms)
    : m_(m), atoms_(std::move(atoms)) {
    for (const auto& a : atoms_) {
        if (a.bundle.size() != m_) throw DimensionError("atom bundle length != m");
        if (a.price < 0.0) throw DomainError("atom price must be >= 0");
        if (a.bundle.empty() && a.price != 0.0)
            throw DomainError("empty-bundle atom must have price 0");
    }
}

double evaluate(const XorValuation& v, const Bundle& s) {
    if (s.size() != v.item_count()) throw DimensionError("bundle length != valuation m");
    double best = 0.0;
    for (const auto& a : v.atoms()) {
        if (a.bundle.subset_of(s)) best = std::max(best, a.price);
    }
    return best;
}

double expected_value(const XorValuation& v,
                      const std::vector<std::pair<Bundle, double>>& support) {
    double total_p = 0.0;
    double acc = 0.0;
    for (const auto& [bundle, p] : support) {
        if (p < 0.0) throw DomainError("support probability must be >= 0");
        total_p += p;
        acc += p * evaluate(v, bundle);
    }
    if (total_p > 1.0 + 1e-9) throw DomainError("support probabilities sum above 1");
    return acc;
}

PriceDist parse_price_dist(const std::string& name) {
    if (name == "uniform") return PriceDist::Uniform;
    if (name == "normal") return PriceDist::Normal;
    throw ConfigError("unknown distribution name: " + name);
}

std::string to_string(PriceDist d) {
    return d == PriceDist::Uniform ? "uniform" : "normal";
}

ValuationDataset generate_synthetic(const AuctionConfig& config, const SyntheticConfig& gen,
                                    std::uint64_t seed) {
    config.validate();
    if (gen.count < 1) throw ConfigError("synthetic count must be >= 1");
    if (gen.max_atoms < 1) throw ConfigError("max_atoms must be >= 1");

    Rng rng(seed);
    const std::size_t m = config.m;
    ValuationDataset ds;
    ds.config = config;
    ds.samples.reserve(gen.count);

    for (std::size_t n = 0; n < gen.count; ++n) {
        const std::size_t atom_count = 1 + rng.index(gen.max_atoms);
        std::vector<XorAtom> atoms;
        atoms.reserve(atom_count);
        for (std::size_t a = 0; a < atom_count; ++a) {
            Bundle b(m);
            for (std::size_t i = 0; i < m; ++i) {
                if (rng.bernoulli(gen.item_prob)) b.set(i);
            }
            if (b.empty()) b.set(rng.index(m));

            // Size-correlated prices, mimicking CATS: price = |S| * base.
            double base = 0.0;
            switch (gen.dist) {
                case PriceDist::Uniform:
                    base = rng.uniform() * config.v_max / static_cast<double>(m);
                    break;
                case PriceDist::Normal:
                    base = rng.normal(config.v_max / (2.0 * static_cast<double>(m)),
                                      config.v_max / (6.0 * static_cast<double>(m)));
                    break;
            }
            double price = static_cast<double>(b.count()) * base;
            price = std::clamp(price, 0.0, config.v_max);
            atoms.push_back({std::move(b), price});
        }
        ds.samples.emplace_back(m, std::move(atoms));
    }
    return ds;
}

namespace {

struct CatsBidLine {
    std::vector<std::size_t> goods;
    double price = 0.0;
};

}  // namespace

ValuationDataset load_cats(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open CATS file: " + path);

    std::size_t goods = 0, dummy = 0;
    bool have_goods = false, have_dummy = false;
    std::vector<CatsBidLine> bids;

    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        // Strip comments and whitespace-only lines.
        const auto comment = line.find('%');
        if (comment != std::string::npos) line.erase(comment);
        std::istringstream is(line);
        std::string first;
        if (!(is >> first)) continue;

        if (first == "goods") {
            if (!(is >> goods)) throw ParseError("malformed goods header", line_no);
            have_goods = true;
        } else if (first == "bids") {
            std::size_t ignored;
            if (!(is >> ignored)) throw ParseError("malformed bids header", line_no);
        } else if (first == "dummy") {
            if (!(is >> dummy)) throw ParseError("malformed dummy header", line_no);
            have_dummy = true;
        } else {
            // Bid line: bidID price good good ... #
            if (!have_goods) throw ParseError("bid line before goods header", line_no);
            CatsBidLine bid;
            if (!(is >> bid.price)) throw ParseError("bid line missing price", line_no);
            std::string tok;
            bool terminated = false;
            while (is >> tok) {
                if (tok == "#") {
                    terminated = true;
                    break;
                }
                std::size_t idx = 0;
                try {
                    idx = std::stoul(tok);
                } catch (const std::exception&) {
                    throw ParseError("bad good id '" + tok + "' in bid line", line_no);
                }
                bid.goods.push_back(idx);
            }
            if (!terminated) throw ParseError("bid line missing terminal '#'", line_no);
            if (bid.price < 0.0) throw ParseError("negative bid price", line_no);
            bids.push_back(std::move(bid));
        }
    }
    if (!have_goods) throw ParseError("missing goods header in " + path);
    if (!have_dummy || dummy == 0)
        throw ParseError("no dummy goods declared in " + path);

    ValuationDataset ds;
    ds.config.m = goods;
    ds.config.v_max = 1.0;
    if (bids.empty()) return ds;

    // The valuation is the XOR of all bids sharing the lowest-numbered dummy
    // good present; dummy goods are indices >= goods.
    std::size_t chosen_dummy = 0;
    bool found = false;
    for (const auto& bid : bids) {
        for (auto g : bid.goods) {
            if (g >= goods && (!found || g < chosen_dummy)) {
                chosen_dummy = g;
                found = true;
            }
        }
    }
    if (!found) return ds;  // bids exist but none carries a dummy: nothing to extract

    std::vector<XorAtom> atoms;
    double vmax = 0.0;
    for (const auto& bid : bids) {
        bool has_chosen = false;
        for (auto g : bid.goods) {
            if (g == chosen_dummy) has_chosen = true;
        }
        if (!has_chosen) continue;
        Bundle b(goods);
        for (auto g : bid.goods) {
            if (g < goods) b.set(g);
        }
        vmax = std::max(vmax, bid.price);
        atoms.push_back({std::move(b), bid.price});
    }
    ds.config.v_max = std::max(vmax, 1e-12);
    ds.samples.emplace_back(goods, std::move(atoms));
    return ds;
}

ValuationDataset load_cats_dir(const std::string& dir) {
    namespace fs = std::filesystem;
    std::vector<std::string> paths;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.is_regular_file()) paths.push_back(e.path().string());
    }
    std::sort(paths.begin(), paths.end());
    ValuationDataset out;
    bool first = true;
    for (const auto& p : paths) {
        ValuationDataset one = load_cats(p);
        if (first) {
            out.config = one.config;
            first = false;
        } else if (one.config.m != out.config.m) {
            throw ParseError("inconsistent goods count across CATS files: " + p);
        }
        out.config.v_max = std::max(out.config.v_max, one.config.v_max);
        for (auto& s : one.samples) out.samples.push_back(std::move(s));
    }
    if (first) throw IoError("no CATS files found in " + dir);
    return out;
}

std::pair<ValuationDataset, ValuationDataset> split(const ValuationDataset& ds,
                                                    double train_fraction, std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw ConfigError("train_fraction must be in (0, 1)");

    std::vector<std::size_t> order(ds.samples.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    // Fisher-Yates with our own stream for cross-platform determinism.
    for (std::size_t i = order.size(); i > 1; --i) {
        std::swap(order[i - 1], order[rng.index(i)]);
    }

    const std::size_t n_train =
        static_cast<std::size_t>(std::floor(static_cast<double>(ds.samples.size()) * train_fraction));
    ValuationDataset train, test;
    train.config = test.config = ds.config;
    train.split = SplitTag::Train;
    test.split = SplitTag::Test;
    for (std::size_t i = 0; i < order.size(); ++i) {
        (i < n_train ? train : test).samples.push_back(ds.samples[order[i]]);
    }
    return {std::move(train), std::move(test)};
}

void save_jsonl(const ValuationDataset& ds, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open for write: " + path);
    for (const auto& v : ds.samples) {
        json rec;
        rec["m"] = v.item_count();
        json atoms = json::array();
        for (const auto& a : v.atoms()) {
            atoms.push_back({{"bundle", a.bundle.bits()}, {"price", a.price}});
        }
        rec["atoms"] = std::move(atoms);
        out << rec.dump() << "\n";
    }
    if (!out) throw IoError("write failed: " + path);
}

ValuationDataset load_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open for read: " + path);
    ValuationDataset ds;
    std::string line;
    std::size_t line_no = 0;
    double vmax = 0.0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::exception& e) {
            throw ParseError(std::string("bad JSON record: ") + e.what(), line_no);
        }
        const std::size_t m = rec.at("m").get<std::size_t>();
        if (ds.samples.empty()) {
            ds.config.m = m;
        } else if (m != ds.config.m) {
            throw ParseError("record m differs from dataset m", line_no);
        }
        std::vector<XorAtom> atoms;
        for (const auto& a : rec.at("atoms")) {
            auto bits = a.at("bundle").get<std::vector<int>>();
            atoms.push_back({Bundle::from_bits(bits), a.at("price").get<double>()});
            vmax = std::max(vmax, atoms.back().price);
        }
        ds.samples.emplace_back(m, std::move(atoms));
    }
    ds.config.v_max = std::max(vmax, 1e-12);
    return ds;
}

}  // namespace bundleflow
