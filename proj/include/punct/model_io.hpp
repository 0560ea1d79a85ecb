#ifndef PUNCT_MODEL_IO_HPP
#define PUNCT_MODEL_IO_HPP

#include <string>

#include "punct/model.hpp"

namespace punct {

// Versioned text format with [meta], [vocab], [theta] and [phi] sections.
// Floats are written with 17 significant digits so a reloaded model is
// bit-identical.
std::string save_model(const Model& m);
Model load_model(std::string_view text);

void write_model_file(const Model& m, const std::string& path);
Model read_model_file(const std::string& path);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, std::string_view content);

}  // namespace punct

#endif
