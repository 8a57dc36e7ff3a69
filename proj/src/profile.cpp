#include "stein/profile.hpp"

#include <sstream>

namespace stein::profile {

int64_t Ledger::total_params() const {
    int64_t t = 0;
    for (const auto& r : rows) t += r.params;
    return t;
}

int64_t Ledger::total_macs() const {
    int64_t t = 0;
    for (const auto& r : rows) t += r.macs;
    return t;
}

std::string Ledger::to_csv() const {
    std::ostringstream os;
    os << "name,params,flops\n";
    for (const auto& r : rows) os << r.name << "," << r.params << "," << r.flops() << "\n";
    return os.str();
}

}  // namespace stein::profile
