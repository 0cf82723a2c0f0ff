#include "sparsegen/commands.hpp"

#include <cstdio>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "sparsegen/baselines.hpp"
#include "sparsegen/image_io.hpp"
#include "sparsegen/synthetic_shapes.hpp"
#include "sparsegen/util.hpp"

namespace fs = std::filesystem;

namespace sparsegen {

Classifier load_zoo_model(const fs::path& classifier_dir, const std::string& id, bool resize) {
  auto f = Classifier::load(classifier_dir / id);
  f.set_id(id);
  f.set_resize(resize);
  return f;
}

std::vector<AblationSpec> ablation_rows() {
  std::vector<AblationSpec> rows;
  rows.push_back({"proposed", {}});
  AblationFlags f;
  f.no_decouple = true;
  rows.push_back({f.name(), f});
  f = {};
  f.p_zero = true;
  rows.push_back({f.name(), f});
  f = {};
  f.ste = true;
  rows.push_back({f.name(), f});
  f = {};
  f.no_sparse_loss = true;
  rows.push_back({f.name(), f});
  f = {};
  f.no_quanti_loss = true;
  rows.push_back({f.name(), f});
  return rows;
}

std::vector<AblationSpec> ablation_rows(const AblationFlags& selected) {
  auto all = ablation_rows();
  if (!selected.any()) return all;
  std::vector<AblationSpec> rows{all.front()};
  for (const auto& r : all) {
    const auto& f = r.flags;
    if ((f.no_decouple && selected.no_decouple) || (f.p_zero && selected.p_zero) ||
        (f.ste && selected.ste) || (f.no_sparse_loss && selected.no_sparse_loss) ||
        (f.no_quanti_loss && selected.no_quanti_loss)) {
      rows.push_back(r);
    }
  }
  return rows;
}

TrainConfig ablation_train_config(const TrainConfig& base, const AblationFlags& flags) {
  auto t = base;
  t.ablation = flags;
  return t;
}

GeneratorConfig ablation_generator_config(const GeneratorConfig& base, const AblationFlags& flags) {
  auto g = base;
  g.decoupled = !flags.no_decouple;
  return g;
}

namespace {

Dataset load_split(const RunConfig& cfg, const std::string& split) {
  auto d = load_dataset(cfg.paths.data_root, split);
  return d;
}

Dataset eval_sample(const RunConfig& cfg) {
  auto test = load_split(cfg, cfg.data.test_split);
  return test.sample(cfg.data.eval_samples, cfg.seed);
}

void freeze_config(const RunConfig& cfg, const fs::path& dir) {
  write_text_file(dir / "resolved_config.ini", cfg.to_text());
}

std::vector<TargetModel> target_models(const RunConfig& cfg) {
  std::vector<TargetModel> out;
  for (const auto& id : cfg.eval.targets) {
    out.push_back({id, [dir = cfg.paths.classifier_dir, id, r = cfg.classifier.resize] {
                     return load_zoo_model(dir, id, r);
                   }});
  }
  return out;
}

FoolingMode fooling_mode(const AttackConfig& a) {
  return a.targeted ? FoolingMode::target(a.target_class) : FoolingMode::untargeted();
}

void make_dataset(const RunConfig& cfg) {
  const std::vector<std::pair<std::string, int64_t>> splits = {
      {cfg.data.train_split, cfg.data.train_count}, {cfg.data.test_split, cfg.data.test_count}};
  uint64_t index = 0;
  for (const auto& [split, count] : splits) {
    SyntheticShapesOptions o;
    o.count = count;
    o.resolution = cfg.data.resolution;
    o.split = split;
    o.seed = derive_seed(cfg.seed, streams::kData, index++);
    write_dataset_folder(make_synthetic_shapes(o), cfg.paths.data_root);
  }
  freeze_config(cfg, cfg.paths.data_root);
}

void train_classifiers(const RunConfig& cfg) {
  auto train = load_split(cfg, cfg.data.train_split);
  auto test = load_split(cfg, cfg.data.test_split);
  std::vector<ClassifierArch> archs;
  if (cfg.classifier.arch == "all") {
    archs = all_archs();
  } else {
    archs = {parse_arch(cfg.classifier.arch)};
  }
  ClassifierTrainOptions opts;
  opts.epochs = cfg.classifier.epochs;
  opts.batch_size = cfg.classifier.batch_size;
  opts.learning_rate = cfg.classifier.learning_rate;
  opts.accuracy_floor = cfg.classifier.accuracy_floor;
  for (auto arch : archs) {
    auto f = train_classifier(arch, train, test, cfg.seed, opts);
    const auto dir = cfg.paths.classifier_dir / arch_id(arch);
    f.save(dir);
    freeze_config(cfg, dir);
    std::cout << arch_id(arch) << " accuracy " << format_double(f.manifest().accuracy)
              << (f.manifest().below_floor ? " (below floor)" : "") << "\n";
  }
}

void train_generator_command(const RunConfig& cfg) {
  auto source = load_zoo_model(cfg.paths.classifier_dir, cfg.eval.source, cfg.classifier.resize);
  auto train = load_split(cfg, cfg.data.train_split);
  const auto out = cfg.paths.output_dir;
  freeze_config(cfg, out);
  const bool can_resume = cfg.resume && fs::exists(out / "generator.json");
  auto trainer = can_resume ? GeneratorTrainer::resume(out, source)
                            : GeneratorTrainer(build_generator(cfg.generator, cfg.seed), source, cfg.train);
  trainer.run(train, cfg.train.total_steps(train.size()), out);
  std::cout << "trained " << trainer.next_step() << " steps; checkpoint in " << out.string() << "\n";
}

void attack_command(const RunConfig& cfg) {
  auto g = load_generator(cfg.paths.generator_dir).generator;
  auto sample = eval_sample(cfg);
  auto adv = generate_adversarial(g, sample.images, cfg.train.attack.tau);
  auto per_image = sparsity_per_image(sample.images, adv);

  std::vector<std::string> ids{cfg.eval.source};
  for (const auto& t : cfg.eval.targets) {
    if (t != cfg.eval.source) ids.push_back(t);
  }
  std::map<std::string, torch::Tensor> preds;
  std::map<std::string, std::string> load_errors;
  for (const auto& id : ids) {
    try {
      preds[id] = predict_all(load_zoo_model(cfg.paths.classifier_dir, id, cfg.classifier.resize), adv);
    } catch (const std::exception& e) {
      load_errors[id] = e.what();
    }
  }

  const auto out = cfg.paths.output_dir;
  freeze_config(cfg, out);
  std::ostringstream records;
  for (int64_t i = 0; i < sample.size(); ++i) {
    std::ostringstream name;
    name << std::setw(6) << std::setfill('0') << i << ".png";
    write_png(out / "images" / name.str(), adv[i]);
    nlohmann::json rec = {{"index", i},
                          {"image", "images/" + name.str()},
                          {"original_path", i < static_cast<int64_t>(sample.paths.size()) ? sample.paths[i] : ""},
                          {"label", sample.labels[i].item<int64_t>()},
                          {"sparsity", per_image[i].item<double>()}};
    nlohmann::json p = nlohmann::json::object();
    for (const auto& [id, t] : preds) p[id] = t[i].item<int64_t>();
    for (const auto& [id, err] : load_errors) p[id] = nullptr;
    rec["predictions"] = p;
    records << rec.dump() << "\n";
  }
  write_text_file(out / "records.jsonl", records.str());
  std::cout << "wrote " << sample.size() << " adversarial images to " << (out / "images").string()
            << "\n";
}

void eval_command(const RunConfig& cfg) {
  auto source = load_zoo_model(cfg.paths.classifier_dir, cfg.eval.source, cfg.classifier.resize);
  auto sample = eval_sample(cfg);
  const auto& a = cfg.train.attack;
  const auto mode = fooling_mode(a);
  const int64_t pixels = sample.info.height * sample.info.width;

  AttackFn attack;
  std::string attack_id = cfg.eval.attack;
  if (cfg.eval.attack == "generator") {
    auto g = load_generator(cfg.paths.generator_dir).generator;
    attack = [g, tau = a.tau](const torch::Tensor& x, int64_t) mutable { return generate_adversarial(g, x, tau); };
    attack_id += ":" + cfg.paths.generator_dir.filename().string();
  } else if (cfg.eval.attack == "pgd0") {
    Pgd0Config p;
    p.k = cfg.eval.pgd_k > 0 ? cfg.eval.pgd_k : std::max<int64_t>(1, pixels / 100);
    p.steps = cfg.eval.pgd_steps;
    p.step_size_pixels = cfg.eval.pgd_step_size;
    p.epsilon_pixels = a.epsilon_pixels;
    p.targeted = a.targeted;
    p.target_class = a.target_class;
    p.seed = cfg.seed;
    attack = [p, source, labels = sample.labels](const torch::Tensor& x, int64_t offset) {
      return pgd0_attack(x, labels.slice(0, offset, offset + x.size(0)), source, p).adversarial;
    };
    attack_id += ":k=" + std::to_string(p.k);
  } else {
    attack = [k = cfg.eval.random_k, eps = a.epsilon(), seed = cfg.seed](const torch::Tensor& x,
                                                                       int64_t) {
      return random_sparse_baseline(x, k, eps, seed);
    };
    attack_id += ":k=" + std::to_string(cfg.eval.random_k);
  }

  auto adv = attack(sample.images, 0);
  auto report = transfer_matrix(attack_id, source, target_models(cfg), sample.images, adv,
                                sample.labels, a.epsilon_pixels, cfg.seed, mode);
  if (cfg.eval.timing_samples > 0) {
    auto timing_set = sample.images.slice(0, 0, std::min(cfg.eval.timing_samples, sample.size()));
    report.latency_seconds = time_attack(attack, timing_set, cfg.eval.warmup).mean_seconds;
  }
  report.timestamp = utc_timestamp();
  freeze_config(cfg, cfg.paths.output_dir);
  write_report(report, cfg.paths.output_dir);
  std::cout << report.to_csv();
}

void ablate_command(const RunConfig& cfg) {
  auto source = load_zoo_model(cfg.paths.classifier_dir, cfg.eval.source, cfg.classifier.resize);
  auto train = load_split(cfg, cfg.data.train_split);
  auto sample = eval_sample(cfg);
  const auto& a = cfg.train.attack;
  const auto out = cfg.paths.output_dir;
  freeze_config(cfg, out);

  std::ostringstream summary;
  summary << "row,sparsity,white_box_fooling,mean_black_box_fooling\n";
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& spec : ablation_rows(cfg.train.ablation)) {
    auto tcfg = ablation_train_config(cfg.train, spec.flags);
    auto gcfg = ablation_generator_config(cfg.generator, spec.flags);
    GeneratorTrainer trainer(build_generator(gcfg, cfg.seed), source, tcfg);
    trainer.run(train, tcfg.total_steps(train.size()), out / spec.name);
    auto adv = generate_adversarial(trainer.generator(), sample.images, a.tau);
    auto report = transfer_matrix("generator:" + spec.name, source, target_models(cfg),
                                  sample.images, adv, sample.labels, a.epsilon_pixels, cfg.seed,
                                  fooling_mode(a));
    write_report(report, out / spec.name);

    double bb = 0.0;
    int n = 0;
    for (const auto& r : report.rows) {
      if (!r.white_box && r.ok) {
        bb += r.fooling.rate;
        ++n;
      }
    }
    const double mean_bb = n > 0 ? bb / n : 0.0;
    const double wb = report.rows.front().fooling.rate;
    summary << spec.name << ',' << format_double(report.sparsity) << ',' << format_double(wb) << ','
            << format_double(mean_bb) << "\n";
    rows.push_back({{"row", spec.name},
                    {"sparsity", report.sparsity},
                    {"white_box_fooling", wb},
                    {"mean_black_box_fooling", mean_bb}});
  }
  write_text_file(out / "ablation.csv", summary.str());
  write_text_file(out / "ablation.json",
                  nlohmann::json{{"schema_version", kReportSchemaVersion}, {"rows", rows}}.dump(2) + "\n");
  std::cout << summary.str();
}

std::string error_record(const std::string& command, int code, const std::string& kind,
                         const std::string& message) {
  return nlohmann::json{{"status", "error"},
                        {"command", command},
                        {"exit_code", code},
                        {"error_type", kind},
                        {"message", message}}
      .dump();
}

}  // namespace

void run_command(const RunConfig& cfg) {
  torch::set_num_threads(static_cast<int>(cfg.workers));
  switch (cfg.command) {
    case Command::MakeDataset: make_dataset(cfg); break;
    case Command::TrainClassifier: train_classifiers(cfg); break;
    case Command::TrainGenerator: train_generator_command(cfg); break;
    case Command::Attack: attack_command(cfg); break;
    case Command::Eval: eval_command(cfg); break;
    case Command::Ablate: ablate_command(cfg); break;
  }
}

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Sparse adversarial generator toolkit"};
  std::string command;
  std::string config_file;
  app.add_option("command", command,
                 "train-classifier | train-generator | attack | eval | ablate | make-dataset")
      ->required();
  app.add_option("--config", config_file, "configuration file");
  app.allow_extras();

  std::optional<fs::path> output_dir;
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << error_record(command, 1, "validation", e.what()) << "\n";
    return 1;
  }

  try {
    std::vector<std::pair<std::string, std::string>> overrides;
    const auto extras = app.remaining();
    for (size_t i = 0; i < extras.size(); ++i) {
      const auto& arg = extras[i];
      if (arg.rfind("--", 0) != 0) throw ValidationError("unexpected argument '" + arg + "'");
      auto key = arg.substr(2);
      if (const auto eq = key.find('='); eq != std::string::npos) {
        overrides.emplace_back(key.substr(0, eq), key.substr(eq + 1));
      } else {
        if (i + 1 >= extras.size()) throw ValidationError("missing value for --" + key);
        overrides.emplace_back(key, extras[++i]);
      }
    }
    auto cfg = parse_config(parse_command(command), config_file, overrides);
    output_dir = cfg.paths.output_dir;
    run_command(cfg);
    return 0;
  } catch (const ValidationError& e) {
    std::cerr << error_record(command, 1, "validation", e.what()) << "\n";
    return 1;
  } catch (const std::exception& e) {
    const auto rec = error_record(command, 2, "runtime", e.what());
    std::cerr << rec << "\n";
    if (output_dir) {
      try {
        write_text_file(*output_dir / "error.json", rec + "\n");
      } catch (...) {
      }
    }
    return 2;
  }
}

}  // namespace sparsegen
