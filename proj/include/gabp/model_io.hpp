#pragma once

#include "gabp/model.hpp"

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

namespace gabp {

class ParseError : public std::runtime_error {
 public:
  explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

/// Model file text. Doubles are written with 17 significant digits so a
/// load of the output reproduces every entry bit for bit.
std::string model_to_json(const FactorGraphModel& model);
FactorGraphModel model_from_json(const std::string& text);

void save_model(const FactorGraphModel& model, const std::filesystem::path& path);
FactorGraphModel load_model(const std::filesystem::path& path);

/// FNV-1a over the canonical model text.
std::uint64_t model_digest(const FactorGraphModel& model);

/// "%.17g", with non-finite values rejected.
std::string format_double(double value);

}  // namespace gabp
