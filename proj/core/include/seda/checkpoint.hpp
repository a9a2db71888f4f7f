#pragma once

#include <cstdint>
#include <string>

#include "seda/data.hpp"
#include "seda/net.hpp"

namespace seda {

// Versioned binary container for a training state: the network spec, student
// and teacher parameters (values + Adam moments + step counts, batch-norm
// running statistics included), the standardization map the model was trained
// with, the RNG seed, the epoch count, and the resolved run configuration as
// a verbatim JSON blob. Round trips are bit-exact: save(load(f)) == f.
struct Checkpoint {
    NetworkSpec spec;
    ParamStore<float> student;
    ParamStore<float> teacher;
    ChannelStats stats;
    std::uint64_t seed = 0;
    std::int32_t epoch = 0;  // completed epochs
    std::string config_json;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void checkpoint_save(const std::string& path, const Checkpoint& ckpt);
Checkpoint checkpoint_load(const std::string& path);

} // namespace seda
