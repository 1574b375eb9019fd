#pragma once

#include "tokenclip/losses.hpp"
#include "tokenclip/semantics.hpp"
#include "tokenclip/synthetic.hpp"
#include "tokenclip/types.hpp"

#include <map>
#include <string>

namespace tokenclip {

// Token file: magic "TOKB", version byte 1, little-endian u32 N, d, h, w,
// flag byte (1 = global embedding present), N*d float32 row-major, then the
// optional d float32 global embedding.
void save_token_file(const std::string& path, const TokenGrid& grid);
TokenGrid load_token_file(const std::string& path);

// Binary PGM (P5, maxval 255). Masks store {0,1} as {0,255}; the loader
// rejects any other byte. Score maps are clamped to [0,1] and quantized with
// round-half-up: byte = floor(s * 255 + 0.5).
void save_mask_pgm(const std::string& path, const Arr& mask);
Arr load_mask_pgm(const std::string& path);
void save_score_pgm(const std::string& path, const Arr& scores);

// Checkpoint: magic "TCKP", version byte 1, the full TrainConfig, then every
// parameter tensor as float64 little-endian in visit_params order.
void save_checkpoint(const std::string& path, const SubspaceModel& m, const TrainConfig& cfg);
std::pair<SubspaceModel, TrainConfig> load_checkpoint(const std::string& path);

// Line-based `key = value` config with '#' comments. Unknown keys are errors.
std::map<std::string, std::string> parse_config_file(const std::string& path);
TrainConfig train_config_from_file(const std::string& path);
SyntheticSpec synthetic_spec_from_file(const std::string& path);

// Dataset directory: dataset.txt (sizes) + train/NNNN.tokb + train/NNNN.pgm
// and the same under test/.
void save_dataset(const std::string& dir, const Dataset& ds);
Dataset load_dataset(const std::string& dir);

// Shortest decimal string that parses back to exactly the same double.
std::string fmt_double(double x);

std::string fmt_loss_csv_header();
std::string fmt_loss_csv_row(int epoch, const LossBreakdown& l);

}  // namespace tokenclip
