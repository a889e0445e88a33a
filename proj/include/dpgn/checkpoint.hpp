#pragma once

#include "dpgn/model.hpp"

namespace dpgn {

// Single-file checkpoint: magic + version, a text manifest (model config,
// config hash, iteration, metrics), then the named parameter/buffer tensors.
void save_checkpoint(DpgnModel& model, const std::string& path, const KeyValues& extras = {});

// Recreates the model from the stored manifest.
DpgnModel load_checkpoint(const std::string& path, KeyValues* manifest_out = nullptr);

// Loads tensors into an existing model; throws "dimension mismatch" when the
// stored shapes do not match the model.
void load_checkpoint_into(DpgnModel& model, const std::string& path,
                          KeyValues* manifest_out = nullptr);

KeyValues read_checkpoint_manifest(const std::string& path);

}  // namespace dpgn
