#pragma once

#include <map>
#include <string>
#include <vector>

#include "genreg/baselines.h"
#include "genreg/data.h"
#include "genreg/model.h"

namespace genreg {

/// Everything needed to predict with a trained head.
///
/// Layout: magic "GRCKPT1"; u64 length + key=value config text (model
/// config, vocabulary values, standardization, bucket scheme, settings);
/// u32 block count; per block u32 name length, name, u32 rows, u32 cols and
/// rows*cols little-endian float32 values in row-major order.
struct Checkpoint {
    ModelConfig config;
    ParamStore params;
    std::vector<double> vocab_values;
    Standardizer standardizer;
    BucketScheme buckets;
    /// Free-form settings snapshot (training config, provenance).
    std::map<std::string, std::string> settings;
};

std::string serialize_checkpoint(const Checkpoint& ckpt);
/// Throws on bad magic, truncated data, or blocks that disagree with the
/// parameter layout implied by the stored config.
Checkpoint deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace genreg
