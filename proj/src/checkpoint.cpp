#include "hypercloud/checkpoint.hpp"

#include <json.hpp>

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace hypercloud {

using json = nlohmann::json;

std::string format_round_trip(double v) {
  if (!std::isfinite(v)) throw std::invalid_argument("cannot serialize non-finite value");
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  std::string s(buf, res.ptr);
  if (s.find_first_of(".eE") == std::string::npos) s += ".0";
  return s;
}

namespace {

void write_int_array(std::ostream& os, const std::vector<int>& v) {
  os << '[';
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  os << ']';
}

std::string read_file(const std::filesystem::path& path, const char* what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(std::string("cannot read ") + what + " '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// Flattens a checkpoint into path -> numbers ("parameters/mu.bias" -> [...]).
// Memory stays proportional to the values, not to a DOM.
class FlatSax : public nlohmann::json_sax<json> {
 public:
  std::map<std::string, std::vector<double>> values;
  std::set<std::string> complete;
  std::string error;

  bool null() override { return fail("unexpected null"); }
  bool boolean(bool) override { return fail("unexpected boolean"); }
  bool number_integer(number_integer_t v) override { return number(static_cast<double>(v)); }
  bool number_unsigned(number_unsigned_t v) override { return number(static_cast<double>(v)); }
  bool number_float(number_float_t v, const string_t&) override { return number(v); }
  bool string(string_t&) override { return fail("unexpected string"); }
  bool binary(binary_t&) override { return fail("unexpected binary"); }

  bool start_object(std::size_t) override {
    if (in_array_) return fail("unexpected object inside array");
    if (!pending_key_.empty()) path_.push_back(pending_key_);
    pending_key_.clear();
    ++object_depth_;
    return true;
  }
  bool end_object() override {
    --object_depth_;
    if (!path_.empty()) {
      complete.insert(joined());
      path_.pop_back();
    }
    return true;
  }
  bool key(string_t& k) override {
    pending_key_ = k;
    return true;
  }
  bool start_array(std::size_t) override {
    if (in_array_) return fail("nested arrays are not supported");
    in_array_ = true;
    path_.push_back(pending_key_);
    pending_key_.clear();
    values[joined()];
    return true;
  }
  bool end_array() override {
    in_array_ = false;
    complete.insert(joined());
    path_.pop_back();
    return true;
  }
  bool parse_error(std::size_t position, const std::string&,
                   const nlohmann::detail::exception& ex) override {
    error = "parse error at byte " + std::to_string(position) + ": " + ex.what();
    return false;
  }

 private:
  bool number(double v) {
    if (in_array_) {
      values[joined()].push_back(v);
    } else {
      path_.push_back(pending_key_);
      values[joined()] = {v};
      complete.insert(joined());
      path_.pop_back();
      pending_key_.clear();
    }
    return true;
  }
  bool fail(const std::string& msg) {
    error = msg + " at '" + joined() + (pending_key_.empty() ? "" : "/" + pending_key_) + "'";
    return false;
  }
  std::string joined() const {
    std::string s;
    for (std::size_t i = 0; i < path_.size(); ++i) s += (i ? "/" : "") + path_[i];
    return s;
  }

  std::vector<std::string> path_;
  std::string pending_key_;
  bool in_array_ = false;
  int object_depth_ = 0;
};

std::vector<int> to_ints(const std::vector<double>& v, const std::string& field) {
  std::vector<int> out;
  for (double x : v) {
    if (x != std::floor(x) || x < 0 || x > 1e9) {
      throw std::runtime_error("checkpoint: field '" + field + "' must hold non-negative integers");
    }
    out.push_back(static_cast<int>(x));
  }
  return out;
}

}  // namespace

std::string checkpoint_to_string(const HyperModel& model) {
  const ModelConfig& c = model.config;
  std::ostringstream os;
  os << "{\n  \"format_version\": " << kCheckpointVersion << ",\n";
  os << "  \"latent_dim\": " << c.latent_dim << ",\n";
  os << "  \"target_widths\": ";
  write_int_array(os, c.target.widths);
  os << ",\n  \"encoder_widths\": ";
  write_int_array(os, c.encoder_widths);
  os << ",\n  \"head_widths\": ";
  write_int_array(os, c.head_widths);
  os << ",\n  \"decoder_widths\": ";
  write_int_array(os, c.decoder_widths());
  os << ",\n  \"parameters\": {";
  bool first = true;
  for (const auto& [name, p] : model.parameters()) {
    os << (first ? "\n" : ",\n") << "    \"" << name << "\": [";
    first = false;
    for (Index i = 0; i < p->size(); ++i) {
      if (i) os << ',';
      os << format_round_trip(p->data()[i]);
    }
    os << ']';
  }
  os << "\n  }\n}\n";
  return os.str();
}

HyperModel checkpoint_from_string(const std::string& text) {
  FlatSax sax;
  const bool ok = json::sax_parse(text, &sax);

  auto require_field = [&](const std::string& field) -> const std::vector<double>& {
    if (!sax.complete.count(field)) {
      std::string msg = "checkpoint: missing field '" + field + "'";
      if (!ok) msg += " (document truncated or malformed: " + sax.error + ")";
      throw std::runtime_error(msg);
    }
    return sax.values.at(field);
  };

  const auto& version = require_field("format_version");
  if (version.size() != 1 || version[0] != kCheckpointVersion) {
    throw std::runtime_error("checkpoint: unsupported format_version (expected " +
                             std::to_string(kCheckpointVersion) + ")");
  }
  ModelConfig cfg;
  const auto& latent = require_field("latent_dim");
  cfg.latent_dim = latent.size() == 1 ? to_ints(latent, "latent_dim")[0] : 0;
  cfg.target.widths = to_ints(require_field("target_widths"), "target_widths");
  cfg.encoder_widths = to_ints(require_field("encoder_widths"), "encoder_widths");
  cfg.head_widths = to_ints(require_field("head_widths"), "head_widths");
  const auto decoder = to_ints(require_field("decoder_widths"), "decoder_widths");
  if (decoder.size() < 2) throw std::runtime_error("checkpoint: decoder_widths too short");
  cfg.decoder_hidden.assign(decoder.begin() + 1, decoder.end() - 1);
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(std::string("checkpoint: ") + e.what());
  }
  if (decoder != cfg.decoder_widths()) {
    throw std::runtime_error(
        "checkpoint: decoder_widths inconsistent with latent_dim and target_widths");
  }

  HyperModel model(cfg);
  for (auto& [name, p] : model.parameters()) {
    const auto& data = require_field("parameters/" + name);
    if (static_cast<Index>(data.size()) != p->size()) {
      throw std::runtime_error("checkpoint: parameter '" + name + "' has " +
                               std::to_string(data.size()) + " values, declared widths imply " +
                               std::to_string(p->size()));
    }
    std::copy(data.begin(), data.end(), p->data());
  }
  if (!ok) throw std::runtime_error("checkpoint: " + sax.error);
  return model;
}

void save_checkpoint(const HyperModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint '" + path.string() + "'");
  out << checkpoint_to_string(model);
  if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

HyperModel load_checkpoint(const std::filesystem::path& path) {
  return checkpoint_from_string(read_file(path, "checkpoint"));
}

// ---------------------------------------------------------------------------

namespace {

const json& field(const json& j, const char* name) {
  if (!j.contains(name)) throw std::runtime_error(std::string("config: missing field '") + name + "'");
  return j.at(name);
}

double number_field(const json& j, const char* name) {
  const json& v = field(j, name);
  if (!v.is_number()) throw std::runtime_error(std::string("config: field '") + name + "' must be a number");
  return v.get<double>();
}

long long integer_field(const json& j, const char* name) {
  const json& v = field(j, name);
  if (!v.is_number_integer()) {
    throw std::runtime_error(std::string("config: field '") + name + "' must be an integer");
  }
  return v.get<long long>();
}

std::vector<int> widths_field(const json& j, const char* name) {
  const json& v = field(j, name);
  if (!v.is_array()) throw std::runtime_error(std::string("config: field '") + name + "' must be an array");
  std::vector<int> out;
  for (const json& x : v) {
    if (!x.is_number_integer()) {
      throw std::runtime_error(std::string("config: field '") + name + "' must hold integers");
    }
    out.push_back(x.get<int>());
  }
  return out;
}

}  // namespace

TrainConfig train_config_from_string(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::runtime_error(std::string("config: ") + e.what());
  }
  if (!j.is_object()) throw std::runtime_error("config: expected a JSON object");

  TrainConfig c;
  const json& loss = field(j, "loss");
  if (!loss.is_string()) throw std::runtime_error("config: field 'loss' must be a string");
  c.loss = parse_loss(loss.get<std::string>());
  c.lambda = number_field(j, "lambda");
  c.learning_rate = number_field(j, "learning_rate");
  c.steps = static_cast<int>(integer_field(j, "steps"));
  c.batch_size = static_cast<int>(integer_field(j, "batch_size"));
  const long long seed = integer_field(j, "seed");
  if (seed < 0) throw std::runtime_error("config: field 'seed' must be non-negative");
  c.seed = static_cast<std::uint64_t>(seed);

  if (j.contains("beta1")) c.beta1 = number_field(j, "beta1");
  if (j.contains("beta2")) c.beta2 = number_field(j, "beta2");
  if (j.contains("epsilon")) c.epsilon = number_field(j, "epsilon");
  if (j.contains("prior_samples")) c.prior_samples = static_cast<int>(integer_field(j, "prior_samples"));
  if (j.contains("latent_dim")) c.model.latent_dim = static_cast<int>(integer_field(j, "latent_dim"));
  if (j.contains("encoder_widths")) c.model.encoder_widths = widths_field(j, "encoder_widths");
  if (j.contains("head_widths")) c.model.head_widths = widths_field(j, "head_widths");
  if (j.contains("decoder_hidden")) c.model.decoder_hidden = widths_field(j, "decoder_hidden");
  if (j.contains("target_widths")) c.model.target.widths = widths_field(j, "target_widths");

  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(std::string("config: ") + e.what());
  }
  return c;
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  return train_config_from_string(read_file(path, "config"));
}

std::string train_config_to_string(const TrainConfig& c) {
  json j;
  j["loss"] = loss_name(c.loss);
  j["lambda"] = c.lambda;
  j["learning_rate"] = c.learning_rate;
  j["beta1"] = c.beta1;
  j["beta2"] = c.beta2;
  j["epsilon"] = c.epsilon;
  j["steps"] = c.steps;
  j["batch_size"] = c.batch_size;
  j["prior_samples"] = c.prior_samples;
  j["seed"] = c.seed;
  j["latent_dim"] = c.model.latent_dim;
  j["encoder_widths"] = c.model.encoder_widths;
  j["head_widths"] = c.model.head_widths;
  j["decoder_hidden"] = c.model.decoder_hidden;
  j["target_widths"] = c.model.target.widths;
  return j.dump(2);
}

void save_history_csv(std::span<const HistoryRow> history, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write history '" + path.string() + "'");
  out << "step,total,err,kl\n";
  for (const HistoryRow& r : history) {
    out << r.step << ',' << format_round_trip(r.terms.total) << ',' << format_round_trip(r.terms.err)
        << ',' << format_round_trip(r.terms.kl) << '\n';
  }
  if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

}  // namespace hypercloud
