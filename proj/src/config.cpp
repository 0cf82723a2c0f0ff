#include "sparsegen/config.hpp"

#include <charconv>
#include <cstdlib>
#include <functional>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "sparsegen/classifiers.hpp"
#include "sparsegen/util.hpp"

namespace fs = std::filesystem;
namespace pt = boost::property_tree;

namespace sparsegen {

std::string command_name(Command c) {
  switch (c) {
    case Command::TrainClassifier: return "train-classifier";
    case Command::TrainGenerator: return "train-generator";
    case Command::Attack: return "attack";
    case Command::Eval: return "eval";
    case Command::Ablate: return "ablate";
    case Command::MakeDataset: return "make-dataset";
  }
  return "?";
}

Command parse_command(const std::string& name) {
  for (auto c : {Command::TrainClassifier, Command::TrainGenerator, Command::Attack, Command::Eval,
                 Command::Ablate, Command::MakeDataset}) {
    if (command_name(c) == name) return c;
  }
  throw ValidationError("unknown command '" + name + "'");
}

namespace {

struct Binding {
  std::string key;
  std::string type;
  std::function<bool(const std::string&)> set;  // false on type mismatch
  std::function<std::string()> get;
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
bool parse_number(const std::string& s, T& out) {
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end;
}

Binding bind_key(const std::string& key, int64_t& v) {
  return {key, "integer", [&v](const std::string& s) { return parse_number(s, v); },
          [&v] { return std::to_string(v); }};
}

Binding bind_key(const std::string& key, uint64_t& v) {
  return {key, "non-negative integer", [&v](const std::string& s) { return parse_number(s, v); },
          [&v] { return std::to_string(v); }};
}

Binding bind_key(const std::string& key, double& v) {
  return {key, "number",
          [&v](const std::string& s) {
            double d = 0.0;
            if (!parse_number(s, d)) return false;
            v = d;
            return true;
          },
          [&v] { return format_double(v); }};
}

Binding bind_key(const std::string& key, bool& v) {
  return {key, "boolean",
          [&v](const std::string& s) {
            if (s == "true" || s == "1" || s == "yes" || s == "on") {
              v = true;
            } else if (s == "false" || s == "0" || s == "no" || s == "off") {
              v = false;
            } else {
              return false;
            }
            return true;
          },
          [&v] { return std::string(v ? "true" : "false"); }};
}

Binding bind_key(const std::string& key, std::string& v) {
  return {key, "string", [&v](const std::string& s) { v = s; return true; }, [&v] { return v; }};
}

Binding bind_key(const std::string& key, fs::path& v) {
  return {key, "path", [&v](const std::string& s) { v = s; return true; },
          [&v] { return v.string(); }};
}

Binding bind_key(const std::string& key, std::vector<std::string>& v) {
  return {key, "comma-separated list",
          [&v](const std::string& s) {
            v.clear();
            std::stringstream in(s);
            std::string item;
            while (std::getline(in, item, ',')) {
              item = trim(item);
              if (!item.empty()) v.push_back(item);
            }
            return true;
          },
          [&v] {
            std::string out;
            for (size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + v[i];
            return out;
          }};
}

Binding bind_normalization(const std::string& key, Normalization& v) {
  return {key, "instance|none",
          [&v](const std::string& s) {
            if (s == "instance") {
              v = Normalization::Instance;
            } else if (s == "none") {
              v = Normalization::None;
            } else {
              return false;
            }
            return true;
          },
          [&v] { return std::string(v == Normalization::Instance ? "instance" : "none"); }};
}

std::vector<Binding> bindings(RunConfig& c) {
  auto& a = c.train.attack;
  auto& ab = c.train.ablation;
  return {
      bind_key("run.seed", c.seed),
      bind_key("run.workers", c.workers),
      bind_key("run.resume", c.resume),
      bind_key("paths.data_root", c.paths.data_root),
      bind_key("paths.classifier_dir", c.paths.classifier_dir),
      bind_key("paths.generator_dir", c.paths.generator_dir),
      bind_key("paths.output_dir", c.paths.output_dir),
      bind_key("data.train_split", c.data.train_split),
      bind_key("data.test_split", c.data.test_split),
      bind_key("data.eval_samples", c.data.eval_samples),
      bind_key("data.train_count", c.data.train_count),
      bind_key("data.test_count", c.data.test_count),
      bind_key("data.resolution", c.data.resolution),
      bind_key("classifier.arch", c.classifier.arch),
      bind_key("classifier.epochs", c.classifier.epochs),
      bind_key("classifier.batch_size", c.classifier.batch_size),
      bind_key("classifier.learning_rate", c.classifier.learning_rate),
      bind_key("classifier.accuracy_floor", c.classifier.accuracy_floor),
      bind_key("classifier.resize", c.classifier.resize),
      bind_key("generator.base_width", c.generator.base_width),
      bind_key("generator.residual_blocks", c.generator.num_residual_blocks),
      bind_key("generator.num_down", c.generator.num_down),
      bind_key("generator.num_up", c.generator.num_up),
      bind_normalization("generator.normalization", c.generator.normalization),
      bind_key("generator.mask_init_bias", c.generator.mask_init_bias),
      bind_key("attack.epsilon", a.epsilon_pixels),
      bind_key("attack.tau", a.tau),
      bind_key("attack.p", a.p),
      bind_key("attack.kappa", a.kappa),
      bind_key("attack.lambda_s", a.lambda_s),
      bind_key("attack.lambda_q", a.lambda_q),
      bind_key("attack.targeted", a.targeted),
      bind_key("attack.target_class", a.target_class),
      bind_key("train.epochs", c.train.epochs),
      bind_key("train.max_steps", c.train.max_steps),
      bind_key("train.batch_size", c.train.batch_size),
      bind_key("train.learning_rate", c.train.learning_rate),
      bind_key("train.beta1", c.train.beta1),
      bind_key("train.beta2", c.train.beta2),
      bind_key("train.checkpoint_every", c.train.checkpoint_every),
      bind_key("ablation.no_decouple", ab.no_decouple),
      bind_key("ablation.p_zero", ab.p_zero),
      bind_key("ablation.ste", ab.ste),
      bind_key("ablation.no_sparse_loss", ab.no_sparse_loss),
      bind_key("ablation.no_quanti_loss", ab.no_quanti_loss),
      bind_key("eval.source", c.eval.source),
      bind_key("eval.targets", c.eval.targets),
      bind_key("eval.attack", c.eval.attack),
      bind_key("eval.timing_samples", c.eval.timing_samples),
      bind_key("eval.warmup", c.eval.warmup),
      bind_key("eval.pgd_k", c.eval.pgd_k),
      bind_key("eval.pgd_steps", c.eval.pgd_steps),
      bind_key("eval.pgd_step_size", c.eval.pgd_step_size),
      bind_key("eval.random_k", c.eval.random_k),
  };
}

struct Entry {
  std::string value;
  std::string location;
};

// boost's INI reader only knows ';' comments.
std::string strip_hash_comments(const std::string& text) {
  std::stringstream in(text);
  std::string line, out;
  while (std::getline(in, line)) {
    out += (trim(line).rfind('#', 0) == 0 ? "" : line) + "\n";
  }
  return out;
}

std::map<std::string, Entry> read_entries(const std::string& text, const std::string& origin) {
  pt::ptree tree;
  std::istringstream in(strip_hash_comments(text));
  try {
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ValidationError(origin + ":" + std::to_string(e.line()) + ": " + e.message());
  }
  std::map<std::string, Entry> out;
  for (const auto& [section, body] : tree) {
    if (body.empty()) {
      out[section] = {trim(body.data()), origin + " (top level)"};
      continue;
    }
    for (const auto& [key, leaf] : body) {
      out[section + "." + key] = {trim(leaf.data()), origin + " [" + section + "]"};
    }
  }
  return out;
}

void require_path(const fs::path& p, const std::string& key, Command c) {
  if (p.empty()) {
    throw ValidationError("missing required path '" + key + "' for command " + command_name(c));
  }
}

void validate(const RunConfig& c) {
  auto train = c.train;
  // ablate reads the flags as a row selection, not as one combined variant.
  if (c.command == Command::Ablate) train.ablation = AblationFlags{};
  train.validate();
  c.generator.validate();
  if (c.workers < 1) throw ValidationError("run.workers must be at least 1");
  if (c.data.eval_samples < 1) throw ValidationError("data.eval_samples must be at least 1");
  if (c.classifier.epochs < 1 || c.classifier.batch_size < 1) {
    throw ValidationError("classifier.epochs and classifier.batch_size must be positive");
  }
  if (c.classifier.arch != "all") parse_arch(c.classifier.arch);
  parse_arch(c.eval.source);
  for (const auto& t : c.eval.targets) parse_arch(t);
  if (c.eval.attack != "generator" && c.eval.attack != "pgd0" && c.eval.attack != "random-sparse") {
    throw ValidationError("eval.attack must be generator, pgd0 or random-sparse, got '" +
                          c.eval.attack + "'");
  }
  if (c.eval.timing_samples < 0 || c.eval.warmup < 0) {
    throw ValidationError("eval.timing_samples and eval.warmup must be >= 0");
  }
  if (c.eval.pgd_k < 0 || c.eval.random_k < 0) throw ValidationError("eval.pgd_k and eval.random_k must be >= 0");

  switch (c.command) {
    case Command::MakeDataset:
      require_path(c.paths.data_root, "paths.data_root", c.command);
      break;
    case Command::TrainClassifier:
      require_path(c.paths.data_root, "paths.data_root", c.command);
      require_path(c.paths.classifier_dir, "paths.classifier_dir", c.command);
      break;
    case Command::TrainGenerator:
    case Command::Ablate:
      require_path(c.paths.data_root, "paths.data_root", c.command);
      require_path(c.paths.classifier_dir, "paths.classifier_dir", c.command);
      break;
    case Command::Attack:
    case Command::Eval:
      require_path(c.paths.data_root, "paths.data_root", c.command);
      require_path(c.paths.classifier_dir, "paths.classifier_dir", c.command);
      if (c.command == Command::Attack || c.eval.attack == "generator") {
        require_path(c.paths.generator_dir, "paths.generator_dir", c.command);
      }
      break;
  }
}

}  // namespace

std::vector<std::string> config_keys() {
  RunConfig c;
  std::vector<std::string> out;
  for (const auto& b : bindings(c)) out.push_back(b.key);
  return out;
}

std::string RunConfig::to_text() const {
  auto copy = *this;
  std::ostringstream out;
  out << "; resolved configuration for command " << command_name(command) << "\n";
  std::string section;
  for (const auto& b : bindings(copy)) {
    const auto dot = b.key.find('.');
    const auto s = b.key.substr(0, dot);
    if (s != section) {
      out << (section.empty() ? "" : "\n") << "[" << s << "]\n";
      section = s;
    }
    out << b.key.substr(dot + 1) << " = " << b.get() << "\n";
  }
  return out.str();
}

RunConfig parse_config_text(Command command, const std::string& text, const std::string& origin,
                            const std::vector<std::pair<std::string, std::string>>& overrides) {
  auto entries = read_entries(text, origin);
  for (const auto& [key, value] : overrides) entries[key] = {trim(value), "command line --" + key};

  RunConfig c;
  c.command = command;
  auto table = bindings(c);
  for (const auto& [key, entry] : entries) {
    auto it = std::find_if(table.begin(), table.end(), [&](const Binding& b) { return b.key == key; });
    if (it == table.end()) {
      throw ValidationError("unknown config key '" + key + "' at " + entry.location);
    }
    if (!it->set(entry.value)) {
      throw ValidationError("type mismatch for key '" + key + "' at " + entry.location +
                            ": expected " + it->type + ", got '" + entry.value + "'");
    }
  }
  c.train.seed = c.seed;
  c.generator.epsilon_pixels = c.train.attack.epsilon_pixels;
  c.generator.decoupled = c.command == Command::Ablate || !c.train.ablation.no_decouple;

  if (c.paths.output_dir.empty()) c.paths.output_dir = fs::path("runs") / command_name(command);
  if (const char* root = std::getenv(kOutputRootEnv); root != nullptr && *root != '\0') {
    for (auto* p : {&c.paths.output_dir, &c.paths.classifier_dir, &c.paths.generator_dir}) {
      if (!p->empty() && p->is_relative()) *p = fs::path(root) / *p;
    }
  }
  validate(c);
  return c;
}

RunConfig parse_config(Command command, const fs::path& file,
                       const std::vector<std::pair<std::string, std::string>>& overrides) {
  std::string text;
  if (!file.empty()) {
    if (!fs::exists(file)) throw ValidationError("config file not found: " + file.string());
    text = read_text_file(file);
  }
  return parse_config_text(command, text, file.empty() ? "<defaults>" : file.string(), overrides);
}

}  // namespace sparsegen
