#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "jts/data.hpp"
#include "jts/model.hpp"
#include "jts/rng.hpp"

namespace jts {

struct TrainConfig {
    std::int64_t max_steps = 500;
    std::int64_t warmup_steps = 50;
    double lr_max = 1e-3;
    double lr_min = 1e-5;
    double weight_decay = 0.1;
    double beta1 = 0.9;
    double beta2 = 0.95;
    double adam_eps = 1e-8;
    std::int64_t batch_size = 16;
    std::uint64_t seed = 0;
    double mixup_prob = 0.2;
    double rescale_lo = 1.0;
    double rescale_hi = 4.0;
    double mask_ratio = 0.2;
    std::int64_t window_len = 512;  // raw points per training sample

    void validate() const;
};

double lr_schedule(std::int64_t step, const TrainConfig& cfg);

// First/second moment buffers aligned with ModelWeights::parameters() order.
struct AdamState {
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
    std::int64_t t = 0;

    static AdamState init_for(const ModelWeights& w);
};

// One AdamW update: decoupled weight decay applied before the moment update,
// bias-corrected moments. Gradients are read from each parameter tensor.
void adamw_step(std::vector<std::pair<std::string, TensorPtr>>& params, AdamState& state,
                double lr, const TrainConfig& cfg);

using Batch = std::vector<std::vector<double>>;

void mixup(Batch& batch, double prob, Rng& rng);
void rescale_aug(Batch& batch, double lo, double hi, Rng& rng);

class CheckpointError : public std::runtime_error {
public:
    enum class Kind { Io, BadMagic, BadVersion, Truncated, Corrupt };
    CheckpointError(Kind k, const std::string& msg) : std::runtime_error(msg), kind(k) {}
    Kind kind;
};

struct Checkpoint {
    std::uint32_t version = 1;
    ModelWeights weights;
    bool has_opt_state = false;
    AdamState opt_state;
    std::int64_t step = 0;
    std::uint64_t seed = 0;
};

// Binary format: magic "JTS1" | u32 version | u64 config length | canonical
// JSON config | records {u32 name len, name, u8 dtype, u8 rank, u64 dims,
// little-endian payload}. Weights are stored as 32-bit floats; training keeps
// parameters on the 32-bit grid so the round trip is bit-exact.
void checkpoint_save(const Checkpoint& ckpt, const std::string& path);
Checkpoint checkpoint_load(const std::string& path);

// Snaps every parameter (and optimizer moment) to the nearest float32.
void quantize_params_f32(ModelWeights& w);
void quantize_state_f32(AdamState& s);

struct LossCurvePoint {
    std::int64_t step;
    double lr;
    double loss;
};

struct TrainResult {
    Checkpoint checkpoint;
    std::vector<LossCurvePoint> curve;
};

class TrainAbort : public std::runtime_error {
public:
    explicit TrainAbort(const std::string& msg) : std::runtime_error(msg) {}
};

// Masked-token training: sample window, augment, patchify, mask, forward,
// weighted quantile loss, backward, AdamW. Deterministic given (configs,
// data, seed).
TrainResult train_loop(const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                       const std::vector<Series>& data);

void write_loss_curve_csv(const std::string& path, const std::vector<LossCurvePoint>& curve);

}  // namespace jts
