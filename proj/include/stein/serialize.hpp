#pragma once

#include <string>
#include <vector>

#include "stein/model.hpp"

namespace stein::model {

/// One tensor in a weights file. Values live as doubles in memory and as
/// little-endian float32 in the file.
struct WeightEntry {
    std::string name;
    Shape shape;
    std::vector<double> values;
};

/// Binary container: magic "STEIN1", a length-prefixed manifest of
/// (name, shape, payload offset) records, then raw little-endian float32.
void save_weights(const std::string& path, const std::vector<WeightEntry>& entries);
std::vector<WeightEntry> load_weights(const std::string& path);

/// Writes all model parameters and buffers, plus optional extra entries
/// (e.g. optimizer state).
void save_model(const std::string& path, SteinFormer& model,
                const std::vector<WeightEntry>& extra = {});

/// Loads parameters and buffers by name; every model tensor must be present
/// with a matching shape. Entries the model does not own are returned.
std::vector<WeightEntry> load_model(const std::string& path, SteinFormer& model);

}  // namespace stein::model
