#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ifdiff/config.h"
#include "ifdiff/tensor.h"

namespace ifdiff {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct TensorRecord {
    std::string name;
    ad::Matrix value;
    ad::Matrix grad;  // pending accumulation between optimizer updates
    ad::Matrix m;     // first moment
    ad::Matrix v;     // second moment
};

// Binary container: magic "IFDIFFCK", u32 version, config JSON, step counters, then every
// tensor as (name, rows, cols, value, grad, m, v) in raw little-endian doubles.
struct Checkpoint {
    DenoiserConfig model;
    TrainConfig train;
    std::uint64_t step = 0;
    std::uint64_t n_updates = 0;
    std::vector<TensorRecord> tensors;
};

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::string& bytes);
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace ifdiff
