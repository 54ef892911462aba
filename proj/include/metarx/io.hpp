#pragma once

#include <filesystem>
#include <string>

#include "metarx/meta.hpp"

namespace metarx {

// frames.jsonl: one frame per line,
// {"kind","state","snr","train":[[y0,y1,x_idx],...],"test":[...]}
void write_frames_jsonl(const std::filesystem::path& path,
                        const std::vector<FrameDataset>& frames);
std::vector<FrameDataset> read_frames_jsonl(const std::filesystem::path& path);

// checkpoint: {"variant","nu","rho","shape","meta":{"seed","config_hash"}}
void write_checkpoint(const std::filesystem::path& path, const Hyperparams& xi,
                      std::uint64_t seed, const std::string& config_hash);
Hyperparams read_checkpoint(const std::filesystem::path& path);

// prediction CSVs (schema keyed by header)
void write_demod_predictions(const std::filesystem::path& path,
                             const std::vector<DemodPrediction>& rows);
void write_eq_predictions(const std::filesystem::path& path,
                          const std::vector<EqPrediction>& rows);

struct PredictionFile {
    TaskKind kind;
    std::vector<DemodPrediction> demod;
    std::vector<EqPrediction> eq;
};
PredictionFile read_predictions(const std::filesystem::path& path);

// shortest round-trip-exact decimal form, stable across runs
std::string format_double(double v);

}  // namespace metarx
