#include "asc/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace asc {

namespace {

using nlohmann::json;

constexpr int kVersion = 1;
constexpr double kLoadTolerance = 1e-6;
constexpr double kExactTolerance = 1e-12;

json matrix_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from(const json& j, const std::string& what) {
  if (!j.is_array()) throw Error(ErrorKind::Parse, what + ": expected an array of rows");
  const auto rows = Eigen::Index(j.size());
  const Eigen::Index cols = rows > 0 ? Eigen::Index(j[0].size()) : 0;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const json& row = j[std::size_t(r)];
    if (!row.is_array() || Eigen::Index(row.size()) != cols) throw Error(ErrorKind::Parse, what + ": ragged rows");
    for (Eigen::Index c = 0; c < cols; ++c) {
      if (!row[std::size_t(c)].is_number()) throw Error(ErrorKind::Parse, what + ": non-numeric entry");
      m(r, c) = row[std::size_t(c)].get<double>();
    }
  }
  return m;
}

json table_json(const ConditionalTable& t) {
  return {{"parents", t.parent_dims()},
          {"child", t.child_dim()},
          {"strictly_positive", t.strictly_positive()},
          {"rows", matrix_json(t.probs())}};
}

ConditionalTable table_from(const json& j, const std::string& name) {
  try {
    auto parents = j.at("parents").get<std::vector<int>>();
    const int child = j.at("child").get<int>();
    const bool positive = j.value("strictly_positive", true);
    Eigen::MatrixXd rows = matrix_from(j.at("rows"), name);
    if (rows.cols() != child) throw Error(ErrorKind::Dimension, name + ": row width differs from child size");
    for (Eigen::Index r = 0; r < rows.rows(); ++r) {
      if ((rows.row(r).array() < 0.0).any()) throw Error(ErrorKind::Normalization, name + ": negative probability");
      const double sum = rows.row(r).sum();
      if (std::abs(sum - 1.0) > kLoadTolerance) {
        throw Error(ErrorKind::Normalization, name + ": row " + std::to_string(r) + " sums to " + format_double(sum));
      }
      // Rows already normalized to working precision are kept verbatim.
      if (std::abs(sum - 1.0) > kExactTolerance) rows.row(r) /= sum;
    }
    return ConditionalTable(std::move(parents), child, std::move(rows), positive);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Parse, name + ": " + e.what());
  }
}

json spec_json(const ModelSpec& s) {
  return {{"card_o", s.card_o},   {"card_s1", s.card_s1}, {"card_s2", s.card_s2},
          {"card_a", s.card_a},   {"card_a1", s.card_a1}, {"card_a2", s.card_a2},
          {"tick_period_level2", s.tick_period_level2}};
}

ModelSpec spec_from(const json& j) {
  ModelSpec s;
  s.card_o = j.at("card_o").get<int>();
  s.card_s1 = j.at("card_s1").get<int>();
  s.card_s2 = j.at("card_s2").get<int>();
  s.card_a = j.at("card_a").get<int>();
  s.card_a1 = j.at("card_a1").get<int>();
  s.card_a2 = j.at("card_a2").get<int>();
  s.tick_period_level2 = j.value("tick_period_level2", 2);
  s.validate();
  return s;
}

json state_json(const CompleteState& x) {
  return {{"o", x.o}, {"s1", x.s1}, {"s2", x.s2}, {"a", x.a}, {"a1", x.a1}, {"a2", x.a2}};
}

CompleteState state_from(const json& j) {
  return {j.at("o").get<int>(),  j.at("s1").get<int>(), j.at("s2").get<int>(),
          j.at("a").get<int>(),  j.at("a1").get<int>(), j.at("a2").get<int>()};
}

constexpr const char* kFactorNames[] = {"s2", "a2", "s1", "a1"};

void check_version(const json& j) {
  if (j.value("version", 0) != kVersion) throw Error(ErrorKind::Parse, "unsupported or missing version");
}

}  // namespace

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string dump_model(const ModelFile& f) {
  json tables = {{"lik", table_json(f.gen.lik)},       {"dyn1", table_json(f.gen.dyn1)},
                 {"dyn2", table_json(f.gen.dyn2)},     {"pol0", table_json(f.gen.pol0)},
                 {"pol1", table_json(f.gen.pol1)},     {"pol2", table_json(f.gen.pol2)},
                 {"ref_o", table_json(f.ref.ref_o)},   {"ref_s1", table_json(f.ref.ref_s1)}};
  json logits = json::object();
  for (int k = 0; k < RecognitionModel::kFactorCount; ++k) logits[kFactorNames[k]] = matrix_json(f.rec.logits()[k]);
  json doc = {{"version", kVersion},
              {"spec", spec_json(f.gen.spec)},
              {"tables", tables},
              {"recognition", {{"floor", f.rec.floored()}, {"logits", logits}}},
              {"x0", state_json(f.x0)}};
  if (f.thermostat) {
    const ThermostatParams& p = *f.thermostat;
    doc["env"] = {{"name", "thermostat"},        {"levels", p.levels},
                  {"schedule", p.schedule},      {"phase_length", p.phase_length},
                  {"success", p.success},        {"drift", p.drift},
                  {"noise", p.noise},            {"preference_width", p.preference_width}};
  }
  return doc.dump(1) + "\n";
}

ModelFile parse_model(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Parse, e.what());
  }
  check_version(doc);
  try {
    ModelFile f;
    const ModelSpec spec = spec_from(doc.at("spec"));
    const json& t = doc.at("tables");
    f.gen = {spec,
             table_from(t.at("lik"), "lik"),
             table_from(t.at("dyn1"), "dyn1"),
             table_from(t.at("dyn2"), "dyn2"),
             table_from(t.at("pol0"), "pol0"),
             table_from(t.at("pol1"), "pol1"),
             table_from(t.at("pol2"), "pol2")};
    f.gen.validate();
    f.ref = {table_from(t.at("ref_o"), "ref_o"), table_from(t.at("ref_s1"), "ref_s1")};
    f.ref.validate(spec);
    if (doc.contains("recognition")) {
      const json& r = doc.at("recognition");
      RecognitionModel::Logits logits;
      for (int k = 0; k < RecognitionModel::kFactorCount; ++k) {
        logits[k] = matrix_from(r.at("logits").at(kFactorNames[k]), std::string("recognition ") + kFactorNames[k]);
      }
      f.rec = RecognitionModel(spec, std::move(logits), r.value("floor", true));
    } else {
      f.rec = RecognitionModel::uniform(spec);
    }
    if (doc.contains("x0")) f.x0 = state_from(doc.at("x0"));
    check_state(spec, f.x0);
    if (doc.contains("env")) {
      const json& e = doc.at("env");
      if (e.value("name", "") != "thermostat") throw Error(ErrorKind::Parse, "unknown environment");
      ThermostatParams p;
      p.levels = e.value("levels", p.levels);
      p.schedule = e.value("schedule", p.schedule);
      p.phase_length = e.value("phase_length", p.phase_length);
      p.success = e.value("success", p.success);
      p.drift = e.value("drift", p.drift);
      p.noise = e.value("noise", p.noise);
      p.preference_width = e.value("preference_width", p.preference_width);
      f.thermostat = p;
    }
    return f;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Parse, e.what());
  }
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Parse, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Parse, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorKind::Parse, "write failed for " + path.string());
}

ModelFile load_model(const std::filesystem::path& path) { return parse_model(read_text(path)); }

void save_model(const std::filesystem::path& path, const ModelFile& file) { write_text(path, dump_model(file)); }

std::string dump_value(const ModelSpec& spec, const DifferentialValue& v) {
  json doc = {{"version", kVersion},
              {"spec", spec_json(spec)},
              {"gain", v.gain},
              {"bias", matrix_json(v.bias)},
              {"anchor", state_json(v.anchor)},
              {"anchor_phase", v.anchor_phase},
              {"residual", v.residual},
              {"iterations", v.iterations}};
  json greedy = json::array();
  for (Eigen::Index r = 0; r < v.greedy.actions.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < v.greedy.actions.cols(); ++c) row.push_back(v.greedy.actions(r, c));
    greedy.push_back(std::move(row));
  }
  doc["greedy"] = greedy;
  return doc.dump(1) + "\n";
}

DifferentialValue parse_value(const ModelSpec& spec, const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Parse, e.what());
  }
  check_version(doc);
  try {
    if (!(spec_from(doc.at("spec")) == spec)) throw Error(ErrorKind::Dimension, "value file spec differs from model");
    DifferentialValue v;
    v.gain = doc.at("gain").get<double>();
    v.bias = matrix_from(doc.at("bias"), "bias");
    if (v.bias.rows() != Eigen::Index(spec.state_count()) || v.bias.cols() != spec.tick_period_level2) {
      throw Error(ErrorKind::Dimension, "bias table shape differs from model");
    }
    v.anchor = state_from(doc.at("anchor"));
    v.anchor_phase = doc.value("anchor_phase", 0);
    v.residual = doc.value("residual", 0.0);
    v.iterations = doc.value("iterations", 0);
    if (doc.contains("greedy")) {
      const json& g = doc.at("greedy");
      v.greedy.actions.resize(Eigen::Index(g.size()), g.empty() ? 0 : Eigen::Index(g[0].size()));
      for (Eigen::Index r = 0; r < v.greedy.actions.rows(); ++r)
        for (Eigen::Index c = 0; c < v.greedy.actions.cols(); ++c)
          v.greedy.actions(r, c) = g[std::size_t(r)][std::size_t(c)].get<int>();
    }
    return v;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Parse, e.what());
  }
}

}  // namespace asc
