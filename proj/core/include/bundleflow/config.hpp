#pragma once

#include <cstdint>
#include <string>

#include "bundleflow/baselines.hpp"
#include "bundleflow/flow.hpp"
#include "bundleflow/menu.hpp"
#include "bundleflow/stage1.hpp"
#include "bundleflow/valuation.hpp"

namespace bundleflow {

struct DataConfig {
    std::string dir = "data";
    double train_fraction = 0.95;
    std::uint64_t seed = 1;
    std::string cats_path;  // file or directory; empty = synthetic generation

    void validate() const;
};

struct BaselineConfig {
    std::string which = "grand";  // grand | big | small | rochetnet
    std::size_t menu_size = 16;   // priced allocations for big/small builders
    std::uint64_t build_seed = 1;
    FixedPriceConfig price;
    RochetNetConfig rochet;

    void validate() const;
};

/// One config file drives every subcommand. Unknown keys are rejected so
/// typos fail loudly; unset keys take the defaults below (menu.K defaults to
/// 5000 for m <= 100 and 20000 above, following the reference setup).
struct RunConfig {
    AuctionConfig auction{5, 1.0};
    SyntheticConfig synthetic;
    DataConfig data;
    FlowConfig flow;
    Stage1Config stage1;
    MenuConfig menu{.K = 0};  // 0 = apply the m-dependent default
    std::size_t snapshot_interval = 0;
    BaselineConfig baseline;
    std::string out_dir = "out";
    std::size_t workers = 1;

    void validate() const;
    std::string to_json() const;  // effective config, defaults applied

    static RunConfig from_json_text(const std::string& text);
    static RunConfig from_file(const std::string& path);
};

}  // namespace bundleflow
