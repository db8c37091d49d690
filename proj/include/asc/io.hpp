#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "asc/control.hpp"
#include "asc/model.hpp"

namespace asc {

/// Thermostat parameters stored alongside a model so that `simulate` can
/// rebuild the matching environment.
struct ThermostatParams {
  int levels = 5;
  std::vector<int> schedule{1, 3};
  int phase_length = 6;
  double success = 0.9;
  double drift = 0.1;
  double noise = 0.0;
  double preference_width = 0.5;
  bool operator==(const ThermostatParams&) const = default;
};

/// Everything an agent carries, plus the episode context and an optional
/// environment description.
struct ModelFile {
  GenerativeModel gen;
  RecognitionModel rec;
  ReferenceModel ref;
  CompleteState x0;
  std::optional<ThermostatParams> thermostat;
};

std::string dump_model(const ModelFile& file);
ModelFile parse_model(const std::string& text);
ModelFile load_model(const std::filesystem::path& path);
void save_model(const std::filesystem::path& path, const ModelFile& file);

std::string dump_value(const ModelSpec& spec, const DifferentialValue& value);
DifferentialValue parse_value(const ModelSpec& spec, const std::string& text);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

/// Shortest decimal form that reads back to the same double.
std::string format_double(double v);

}  // namespace asc
