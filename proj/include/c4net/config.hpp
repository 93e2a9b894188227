#pragma once

// Flat `key = value` run configuration. Blank lines and `#` comments are
// ignored; unknown keys, repeated keys and malformed values are errors.
//
// Model:    encoder_channels, input_size, cf, pyramid_sizes,
//           attention_reduction, decoder_mode, use_ccm, use_cem, use_psm,
//           encoder_residual
// Loss:     lambda_tilde, window_k, gamma, eps, use_el, use_wiou
// Training: epochs, batch_size, momentum, weight_decay, lr_head,
//           lr_encoder, warmup_fraction, crop, flip, min_crop, val_fraction

#include <filesystem>
#include <stdexcept>
#include <string>

#include "c4net/losses.hpp"
#include "c4net/model.hpp"
#include "c4net/train.hpp"

namespace c4net {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  ModelConfig model;
  LossConfig loss;
  TrainConfig train;
};

RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);
// Every key with its current value; parse_config(format_config(c)) == c.
std::string format_config(const RunConfig& cfg);

}  // namespace c4net
