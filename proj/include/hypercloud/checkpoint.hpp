#pragma once

#include "hypercloud/model.hpp"

#include <filesystem>
#include <span>
#include <string>

namespace hypercloud {

inline constexpr int kCheckpointVersion = 1;

// Checkpoint document:
//   {"format_version": 1, "latent_dim": D,
//    "target_widths": [...], "encoder_widths": [...], "head_widths": [...],
//    "decoder_widths": [D, ..., param_count],
//    "parameters": {"encoder.0.weight": [row-major values], ...}}
// Values are written in shortest round-trip form, so save -> load is exact.
std::string checkpoint_to_string(const HyperModel& model);
HyperModel checkpoint_from_string(const std::string& text);

void save_checkpoint(const HyperModel& model, const std::filesystem::path& path);
HyperModel load_checkpoint(const std::filesystem::path& path);

/// Required keys: loss, lambda, learning_rate, steps, batch_size, seed.
/// Optional: beta1, beta2, epsilon, prior_samples, latent_dim,
/// encoder_widths, head_widths, decoder_hidden, target_widths.
TrainConfig train_config_from_string(const std::string& text);
TrainConfig load_train_config(const std::filesystem::path& path);
std::string train_config_to_string(const TrainConfig& config);

/// CSV with header `step,total,err,kl`.
void save_history_csv(std::span<const HistoryRow> history, const std::filesystem::path& path);

// Shortest decimal that parses back to the same double; always carries a
// decimal point or exponent.
std::string format_round_trip(double v);

}  // namespace hypercloud
