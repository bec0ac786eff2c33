#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "ifdiff/denoiser.h"

namespace ifdiff {

struct TrainConfig {
    double lr = 5e-4;
    double weight_decay = 1e-5;
    int batch_size = 32;
    int grad_accum_steps = 2;
    long total_steps = 1000;
    double alpha = 0.5;   // prediction loss weight
    double lambda = 0.5;  // alignment loss weight
    std::uint64_t seed = 0;
    double clip_norm = 10.0;
    bool attn_all_layers = false;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;

    bool operator==(const TrainConfig&) const = default;
};

void validate(const TrainConfig& config);

// Flat key=value settings shared by config files and CLI overrides. Blank lines and lines
// starting with '#' are ignored.
std::map<std::string, std::string> parse_key_values(const std::string& text);
std::map<std::string, std::string> load_key_values(const std::string& path);

// Unknown keys raise ConfigError.
void apply_setting(const std::string& key, const std::string& value, DenoiserConfig& model, TrainConfig& train);
void apply_settings(const std::map<std::string, std::string>& kv, DenoiserConfig& model, TrainConfig& train);

std::string config_to_json(const DenoiserConfig& model, const TrainConfig& train);
void config_from_json(const std::string& text, DenoiserConfig& model, TrainConfig& train);

}  // namespace ifdiff
