#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace stein::profile {

/// One accounting row. `macs` already includes how often the layer runs for
/// the counted input (Siamese branches run shared layers twice per pair).
struct LedgerRow {
    std::string name;
    int64_t params = 0;
    int64_t macs = 0;

    int64_t flops() const { return 2 * macs; }  // 1 MAC = 2 FLOPs
};

struct Ledger {
    std::vector<LedgerRow> rows;

    int64_t total_params() const;
    int64_t total_macs() const;
    int64_t total_flops() const { return 2 * total_macs(); }

    /// CSV with header "name,params,flops".
    std::string to_csv() const;
};

}  // namespace stein::profile
