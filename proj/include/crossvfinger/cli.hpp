#ifndef CROSSVFINGER_CLI_HPP
#define CROSSVFINGER_CLI_HPP

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "crossvfinger/crossvfinger.hpp"

namespace cvf::cli {

namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitDomain = 1;
inline constexpr int kExitUsage = 2;

namespace detail {

struct GlobalOptions {
  std::string config_path;
  std::vector<std::string> overrides;
};

/// Config file, then --set overrides; validated before anything is written.
inline PipelineConfig load_config(const GlobalOptions& g) {
  PipelineConfig config = g.config_path.empty() ? PipelineConfig{} : parse_config(g.config_path);
  for (const auto& kv : g.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw Error(ErrorCode::ParseError, "--set expects key=value, got '" + kv + "'");
    apply_setting(config, cvf::detail::trim(kv.substr(0, eq)), cvf::detail::trim(kv.substr(eq + 1)));
  }
  validate(config);
  return config;
}

inline std::string first_line(const std::string& bytes) {
  const auto eol = bytes.find('\n');
  return eol == std::string::npos ? std::string{} : bytes.substr(0, eol);
}

inline nlohmann::ordered_json inspect_path(const fs::path& path) {
  const std::string bytes = read_file(path);
  if (bytes.rfind("\x89PNG", 0) == 0 || bytes.rfind("P5", 0) == 0 || bytes.rfind("P2", 0) == 0) {
    const GrayImage img = load_image(path, LoadOptions{0});
    const auto [mean, var] = moments(img.pixels);
    return {{"type", "image"}, {"width", img.width()}, {"height", img.height()}, {"mean", mean}, {"variance", var}};
  }
  const auto header = nlohmann::json::parse(first_line(bytes), nullptr, false);
  if (header.is_discarded() || !header.is_object()) throw Error(ErrorCode::UnsupportedFormat, "unrecognized file " + path.string());
  if (header.contains("kind")) {
    const DescriptorFile d = decode_descriptor(bytes);
    double sum = 0.0, sq = 0.0;
    for (float v : d.values) {
      sum += v;
      sq += static_cast<double>(v) * v;
    }
    return {{"type", "descriptor"}, {"header", nlohmann::ordered_json::parse(d.header.dump())}, {"sum", sum}, {"l2_norm", std::sqrt(sq)}};
  }
  if (header.contains("matrices")) {
    const CcaModel m = deserialize_model(bytes);
    std::vector<double> lambdas(m.lambdas.data(), m.lambdas.data() + m.lambdas.size());
    return {{"type", "model"},          {"p", m.p()},
            {"q", m.q()},               {"k", m.k()},
            {"epsilon", m.epsilon},     {"fusion_mode", to_string(m.fusion_mode)},
            {"fused_length", m.fused_length()}, {"hash", model_hash(m)},
            {"lambdas", lambdas}};
  }
  if (header.contains("model_hash")) {
    const TemplateDB db = TemplateDB::load(path);
    nlohmann::ordered_json subjects = nlohmann::ordered_json::object();
    for (const auto& s : db.subjects()) subjects[s] = db.records(s).size();
    return {{"type", "template_db"}, {"model_hash", db.model_hash()}, {"records", db.size()}, {"subjects", subjects}};
  }
  throw Error(ErrorCode::UnsupportedFormat, "unrecognized file " + path.string());
}

}  // namespace detail

/// Runs one subcommand. `args` excludes the program name.
inline int dispatch(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Cross-sensor fingerprint verification with Co-Ror and Gabor-HoG descriptors", "crossvfinger"};
  app.require_subcommand(1);
  app.fallthrough();
  detail::GlobalOptions global;
  app.add_option("--config", global.config_path, "key = value configuration file")->check(CLI::ExistingFile);
  app.add_option("--set", global.overrides, "override one setting, e.g. --set coror.offsets=5,10")->expected(1);

  std::function<int()> action;

  // synth
  auto* synth = app.add_subcommand("synth", "render a synthetic two-sensor corpus");
  std::string synth_out;
  int fingers = 50, impressions = 2;
  std::uint64_t seed = 0;
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--fingers", fingers, "number of fingers")->check(CLI::Range(2, 100000));
  synth->add_option("--impressions", impressions, "impressions per sensor")->check(CLI::Range(1, 1000));
  synth->add_option("--seed", seed, "random seed");
  synth->callback([&] {
    action = [&] {
      detail::load_config(global);
      const auto files = generate_synthetic_corpus(seed, fingers, impressions, default_sensor_profiles(), synth_out);
      out << nlohmann::ordered_json{{"out", synth_out}, {"images", files.size()}, {"seed", seed}}.dump() << "\n";
      return kExitOk;
    };
  });

  // extract
  auto* extract = app.add_subcommand("extract", "compute one descriptor of an image");
  std::string kind = "coror", extract_img, extract_out, orientation_csv, mask_out;
  extract->add_option("--kind", kind, "coror or gaborhog")->check(CLI::IsMember({"coror", "gaborhog"}));
  extract->add_option("--out", extract_out, "descriptor file (default IMG.KIND)");
  extract->add_option("--orientation-csv", orientation_csv, "write the aligned orientation field as CSV");
  extract->add_option("--mask", mask_out, "write the foreground mask as PGM");
  extract->add_option("image", extract_img, "input image")->required();
  extract->callback([&] {
    action = [&] {
      const Extractor extractor(detail::load_config(global));
      const GrayImage img = load_image(extract_img);
      const fs::path target = extract_out.empty() ? fs::path(extract_img + "." + kind) : fs::path(extract_out);
      std::size_t length = 0;
      if (kind == "coror") {
        const ExtractionTrace t = extractor.trace(img);
        const auto& cc = extractor.config().coror;
        const CoRorDescriptor d = build_coror(t.quantized, cc.offsets, cc.directions);
        length = d.values.size();
        if (!orientation_csv.empty()) save_orientation_csv(align_to_dominant(t.orientation, t.dominant), orientation_csv);
        if (!mask_out.empty()) save_mask_pgm(t.mask, mask_out);
        save_descriptor(d, target);
      } else {
        if (!orientation_csv.empty() || !mask_out.empty()) {
          const ExtractionTrace t = extractor.trace(img);
          if (!orientation_csv.empty()) save_orientation_csv(align_to_dominant(t.orientation, t.dominant), orientation_csv);
          if (!mask_out.empty()) save_mask_pgm(t.mask, mask_out);
        }
        const auto& pre = extractor.config().preprocessing;
        const GaborHogDescriptor d =
            build_gabor_hog(normalize(img, pre.target_mean, pre.target_variance), extractor.bank(), extractor.config().gabor.bins);
        length = d.values.size();
        save_descriptor(d, target);
      }
      out << nlohmann::ordered_json{{"kind", kind}, {"length", length}, {"out", target.string()}}.dump() << "\n";
      return kExitOk;
    };
  });

  // train
  auto* train = app.add_subcommand("train", "fit the CCA fusion model on gallery images");
  std::vector<std::string> train_dirs;
  std::string train_out;
  train->add_option("--gallery", train_dirs, "gallery directory (repeatable)")->required()->expected(1);
  train->add_option("--out", train_out, "model file")->required();
  train->callback([&] {
    action = [&] {
      const PipelineConfig config = detail::load_config(global);
      const Extractor extractor(config);
      std::vector<DatasetEntry> entries;
      for (const auto& dir : train_dirs) {
        auto part = scan_dataset(dir);
        entries.insert(entries.end(), part.begin(), part.end());
      }
      std::vector<std::string> ids;
      for (const auto& e : entries) ids.push_back(e.path.filename().string());
      const CcaModel model = fit_cca(make_pair_set(extract_all(entries, extractor), ids), config.cca_options());
      save_model(model, train_out);
      out << nlohmann::ordered_json{{"out", train_out}, {"n", entries.size()}, {"k", model.k()},
                                    {"fused_length", model.fused_length()}, {"hash", model_hash(model)}}
                 .dump()
          << "\n";
      return kExitOk;
    };
  });

  // enroll / verify share their options
  std::string db_path, model_path, subject, finger, probe_img;
  std::optional<double> threshold;
  auto* enroll_cmd = app.add_subcommand("enroll", "add a template to the database");
  enroll_cmd->add_option("--db", db_path, "template database file")->required();
  enroll_cmd->add_option("--model", model_path, "model file")->required()->check(CLI::ExistingFile);
  enroll_cmd->add_option("--id", subject, "subject id")->required();
  enroll_cmd->add_option("--finger", finger, "optional finger id");
  enroll_cmd->add_option("image", probe_img, "image to enroll")->required();
  enroll_cmd->callback([&] {
    action = [&] {
      const Extractor extractor(detail::load_config(global));
      const CcaModel model = load_model(model_path);
      const MatchingContext ctx(extractor, model);
      TemplateDB db = fs::exists(db_path) ? TemplateDB::load(db_path) : TemplateDB(ctx.model_hash);
      const GrayImage img = load_image(probe_img);
      const TemplateRecord rec = ctx.make_record(img, subject, finger.empty() ? std::nullopt : std::optional(finger));
      db.add(rec);
      db.append(db_path, rec);
      out << nlohmann::ordered_json{{"id", subject}, {"templates", db.records(subject).size()}, {"image_hash", rec.image_hash}}
                 .dump()
          << "\n";
      return kExitOk;
    };
  });

  auto* verify_cmd = app.add_subcommand("verify", "match an image against a subject's templates");
  verify_cmd->add_option("--db", db_path, "template database file")->required()->check(CLI::ExistingFile);
  verify_cmd->add_option("--model", model_path, "model file")->required()->check(CLI::ExistingFile);
  verify_cmd->add_option("--id", subject, "subject id")->required();
  verify_cmd->add_option("--threshold", threshold, "accept iff distance <= threshold")->check(CLI::NonNegativeNumber);
  verify_cmd->add_option("image", probe_img, "probe image")->required();
  verify_cmd->callback([&] {
    action = [&] {
      const Extractor extractor(detail::load_config(global));
      const CcaModel model = load_model(model_path);
      const MatchingContext ctx(extractor, model);
      const TemplateDB db = TemplateDB::load(db_path);
      MatchResult result = match(load_image(probe_img), subject, ctx, db);
      nlohmann::ordered_json line{{"score", result.score}};
      if (threshold) {
        result.decision = cvf::verify(result, *threshold);
        line["decision"] = to_string(*result.decision);
      }
      line["per_template_scores"] = result.per_template_scores;
      out << line.dump() << "\n";
      return result.decision == Decision::Reject ? kExitDomain : kExitOk;
    };
  });

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "score a gallery/probe protocol and write reports");
  std::string gallery_dir, probe_dir, report_dir;
  std::size_t impostor_cap = 0;
  evaluate->add_option("--gallery", gallery_dir, "gallery directory")->required();
  evaluate->add_option("--probe", probe_dir, "probe directory")->required();
  evaluate->add_option("--model", model_path, "model file")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--out", report_dir, "report directory")->required();
  evaluate->add_option("--impostor-cap", impostor_cap, "maximum impostor comparisons (0 = all)");
  evaluate->add_option("--seed", seed, "impostor sampling seed");
  evaluate->callback([&] {
    action = [&] {
      const PipelineConfig config = detail::load_config(global);
      const CcaModel model = load_model(model_path);
      const ProtocolSpec spec{{fs::path(gallery_dir).filename().string(), gallery_dir},
                              {fs::path(probe_dir).filename().string(), probe_dir},
                              impostor_cap,
                              seed};
      const ScoreSet scores = run_protocol(spec, model, config);
      const Metrics metrics = compute_metrics(scores);
      emit_report(metrics, scores, report_dir);
      out << to_json(metrics).dump() << "\n";
      return kExitOk;
    };
  });

  // inspect
  auto* inspect = app.add_subcommand("inspect", "summarize an image, descriptor, model or template database");
  std::string inspect_target;
  inspect->add_option("path", inspect_target, "file to inspect")->required()->check(CLI::ExistingFile);
  inspect->callback([&] {
    action = [&] {
      detail::load_config(global);
      out << detail::inspect_path(inspect_target).dump() << "\n";
      return kExitOk;
    };
  });

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return kExitUsage;
  }

  try {
    return action ? action() : kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitDomain;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitDomain;
  }
}

inline int dispatch(int argc, char** argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  return dispatch(std::vector<std::string>(argv + 1, argv + argc), out, err);
}

}  // namespace cvf::cli

#endif  // CROSSVFINGER_CLI_HPP
