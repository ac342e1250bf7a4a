// adelta: command-line front end for extracting, training, applying and
// evaluating attribute deltas.
//
// Exit codes: 0 success, 1 usage error, 2 runtime error. Runtime errors are
// reported on stderr as one JSON line {"error": {"code", "message"}}.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "adelta/delta_file.hpp"
#include "adelta/engine.hpp"
#include "adelta/evaluation.hpp"
#include "adelta/extraction.hpp"
#include "adelta/image.hpp"
#include "adelta/pair_inversion.hpp"
#include "adelta/prompt_set_io.hpp"
#include "adelta/registry.hpp"
#include "adelta/service.hpp"
#include "adelta/toy_models.hpp"
#include "adelta/trainer.hpp"

namespace fs = std::filesystem;
using namespace adelta;

namespace {

struct Globals {
  std::string registry = "deltas";
  std::string encoder = "toy-aggregating";
  std::string backbone = "toy-linear";
};

void print_json(const nlohmann::json& j) { std::cout << j.dump(2) << "\n"; }

std::shared_ptr<const AttributeDelta> resolve_delta(const std::string& arg, const Globals& g) {
  std::error_code ec;
  if (fs::is_regular_file(arg, ec)) return std::make_shared<AttributeDelta>(load_delta(arg));
  Registry reg(g.registry);
  return reg.get(arg, g.encoder);
}

// Writes to `out` when given, otherwise into the registry.
fs::path store_delta(const AttributeDelta& delta, const std::string& out, const Globals& g) {
  if (!out.empty()) {
    save_delta(delta, out);
    return out;
  }
  Registry reg(g.registry);
  return reg.save(delta);
}

std::pair<double, double> parse_range(const std::string& s) {
  const auto colon = s.find(':', 1);
  if (colon == std::string::npos) throw Error(ErrorCode::InvalidArgument, "range must be lo:hi, got '" + s + "'");
  return {std::stod(s.substr(0, colon)), std::stod(s.substr(colon + 1))};
}

// DELTA:SUBJECT:LO:HI:N, parsed from the right so DELTA may be a path.
SweepAxis parse_axis(const std::string& spec, const Globals& g) {
  std::vector<std::string> parts;
  std::size_t end = spec.size();
  for (int i = 0; i < 4; ++i) {
    const auto pos = spec.rfind(':', end - 1);
    if (pos == std::string::npos || end == 0)
      throw Error(ErrorCode::InvalidArgument, "axis must be DELTA:SUBJECT:LO:HI:N, got '" + spec + "'");
    parts.insert(parts.begin(), spec.substr(pos + 1, end - pos - 1));
    end = pos;
  }
  parts.insert(parts.begin(), spec.substr(0, end));
  SweepAxis axis;
  axis.application.delta = resolve_delta(parts[0], g);
  axis.application.subject_word = parts[1];
  axis.scales = linear_scales(std::stod(parts[2]), std::stod(parts[3]), std::stoi(parts[4]));
  return axis;
}

// DELTA:SUBJECT:SCALE[:DELAY]
DeltaApplication parse_edit(const std::string& spec, const Globals& g) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  for (std::size_t pos; (pos = spec.find(':', start)) != std::string::npos; start = pos + 1)
    parts.push_back(spec.substr(start, pos - start));
  parts.push_back(spec.substr(start));
  if (parts.size() < 3 || parts.size() > 4)
    throw Error(ErrorCode::InvalidArgument, "edit must be DELTA:SUBJECT:SCALE[:DELAY], got '" + spec + "'");
  DeltaApplication app;
  app.delta = resolve_delta(parts[0], g);
  app.subject_word = parts[1];
  app.scale = std::stod(parts[2]);
  if (parts.size() == 4) app.delay_steps = std::stoi(parts[3]);
  return app;
}

Occurrence parse_occurrence(const std::string& s) {
  if (s == "all") return Occurrence::every();
  return Occurrence::nth(static_cast<std::size_t>(std::stoul(s)));
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << text;
}

std::string templ_from_phrase(const MarkedPhrase& phrase, const std::string& prefix) {
  const std::string templ =
      std::string(phrase.before_subject()) + "{noun}" + std::string(phrase.after_subject());
  return join_prefix(prefix, templ, true);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"adelta: attribute deltas in text-embedding space"};
  app.require_subcommand(1);
  Globals g;
  if (const char* env = std::getenv("ADELTA_REGISTRY")) g.registry = env;
  app.add_option("--registry", g.registry, "Delta registry root")->capture_default_str();
  app.add_option("--encoder", g.encoder, "Text encoder id")->capture_default_str();
  app.add_option("--backbone", g.backbone, "Backbone id")->capture_default_str();

  // extract
  auto* extract = app.add_subcommand("extract", "CLIP-difference delta from a contrastive prompt set");
  std::string ex_set, ex_out, ex_name;
  bool ex_no_fix = false;
  extract->add_option("--prompt-set", ex_set, "Prompt-set file or built-in name")->required();
  extract->add_option("--out", ex_out, "Output .adlt file (default: registry)");
  extract->add_option("--name", ex_name, "Attribute name override");
  extract->add_flag("--no-article-fix", ex_no_fix, "Keep a/an as written when prefixing");

  // train
  auto* train = app.add_subcommand("train", "Learn a delta through the frozen backbone");
  std::string tr_set, tr_out, tr_name, tr_alpha = "-5:5", tr_excl = "-0.1:0.1", tr_anchor = "noise-injection",
                                       tr_log;
  DeltaTrainConfig tr_cfg;
  train->add_option("--prompt-set", tr_set, "Prompt-set file or built-in name");
  train->add_option("--out", tr_out, "Output .adlt file (default: registry)");
  train->add_option("--name", tr_name, "Attribute name override");
  train->add_option("--steps", tr_cfg.steps)->capture_default_str();
  train->add_option("--batch", tr_cfg.batch_size)->capture_default_str();
  train->add_option("--lr", tr_cfg.optimizer.learning_rate)->capture_default_str();
  train->add_option("--beta1", tr_cfg.optimizer.beta1)->capture_default_str();
  train->add_option("--beta2", tr_cfg.optimizer.beta2)->capture_default_str();
  train->add_option("--weight-decay", tr_cfg.optimizer.weight_decay)->capture_default_str();
  train->add_option("--alpha-range", tr_alpha, "lo:hi")->capture_default_str();
  train->add_option("--alpha-exclusion", tr_excl, "lo:hi")->capture_default_str();
  train->add_option("--alphas", tr_cfg.alphas_per_item, "Alpha draws per batch item")->capture_default_str();
  train->add_option("--anchor-mode,--delay-mode", tr_anchor, "noise-injection | trajectory-truncation")
      ->capture_default_str();
  train->add_option("--anchors-per-triple", tr_cfg.anchors_per_triple, "0 = fresh anchors")->capture_default_str();
  train->add_option("--seed", tr_cfg.seed)->capture_default_str();
  train->add_option("--log", tr_log, "Write the training log as JSON lines");

  // invert-pair
  auto* invert = app.add_subcommand("invert-pair", "Learn a per-token delta from one image/caption pair");
  std::string iv_image, iv_caption, iv_out, iv_subject, iv_attr_out, iv_name;
  PairInversionConfig iv_cfg;
  invert->add_option("--image", iv_image, "Target PNG")->required();
  invert->add_option("--caption", iv_caption)->required();
  invert->add_option("--out", iv_out, "Output JSON for the full delta")->required();
  invert->add_option("--steps", iv_cfg.steps)->capture_default_str();
  invert->add_option("--lr", iv_cfg.optimizer.learning_rate)->capture_default_str();
  invert->add_option("--weight-decay", iv_cfg.optimizer.weight_decay)->capture_default_str();
  invert->add_option("--seed", iv_cfg.seed)->capture_default_str();
  invert->add_option("--subject", iv_subject, "Also export this subject's rows as an attribute delta");
  invert->add_option("--name", iv_name, "Attribute name for --subject export");
  invert->add_option("--attr-out", iv_attr_out, "Output .adlt for --subject export (default: registry)");

  // apply
  auto* apply = app.add_subcommand("apply", "Generate an image with deltas applied");
  std::string ap_prompt, ap_delta, ap_subject, ap_occ = "0", ap_out;
  std::vector<std::string> ap_edits;
  double ap_scale = 1.0;
  GenerationConfig ap_cfg;
  int ap_delay = 0;
  apply->add_option("--prompt", ap_prompt)->required();
  apply->add_option("--delta", ap_delta, "Delta file or registry name");
  apply->add_option("--subject", ap_subject, "Subject word for --delta");
  apply->add_option("--occurrence", ap_occ, "Occurrence index or 'all'")->capture_default_str();
  apply->add_option("--scale", ap_scale)->capture_default_str();
  apply->add_option("--delay", ap_delay, "Sampler steps before the delta is applied")->capture_default_str();
  apply->add_option("--edit", ap_edits, "Extra application DELTA:SUBJECT:SCALE[:DELAY]");
  apply->add_option("--seed", ap_cfg.seed)->capture_default_str();
  apply->add_option("--steps", ap_cfg.steps)->capture_default_str();
  apply->add_option("--cfg", ap_cfg.guidance_weight, "Guidance weight")->capture_default_str();
  apply->add_option("--out", ap_out, "Output PNG")->required();

  // sweep
  auto* sweep = app.add_subcommand("sweep", "Render a grid over one or two delta scales");
  std::string sw_prompt, sw_axis, sw_axis2, sw_out;
  GenerationConfig sw_cfg;
  sweep->add_option("--prompt", sw_prompt)->required();
  sweep->add_option("--axis", sw_axis, "DELTA:SUBJECT:LO:HI:N")->required();
  sweep->add_option("--axis2", sw_axis2, "DELTA:SUBJECT:LO:HI:N");
  sweep->add_option("--seed", sw_cfg.seed)->capture_default_str();
  sweep->add_option("--steps", sw_cfg.steps)->capture_default_str();
  sweep->add_option("--cfg", sw_cfg.guidance_weight)->capture_default_str();
  sweep->add_option("--out", sw_out, "Output directory")->required();

  // eval
  auto* eval = app.add_subcommand("eval", "Scale sweep evaluated with the toy metric adapters");
  std::string ev_delta, ev_out, ev_svg, ev_plus, ev_minus;
  std::vector<std::string> ev_nouns{"person", "woman", "man", "child"};
  std::vector<double> ev_scales{-2, -1, 0, 1, 2};
  std::vector<std::string> ev_modes{"normal"};
  int ev_seeds = 25;
  double ev_cos_scale = 1.0;
  EvalSweepConfig ev_cfg;
  eval->add_option("--delta", ev_delta, "Delta file or registry name")->required();
  eval->add_option("--nouns", ev_nouns)->delimiter(',')->capture_default_str();
  eval->add_option("--scales", ev_scales)->delimiter(',')->capture_default_str();
  eval->add_option("--seeds", ev_seeds, "Seeds 0..N-1 per noun")->capture_default_str();
  eval->add_option("--modes", ev_modes, "normal,delayed")->delimiter(',')->capture_default_str();
  eval->add_option("--delay", ev_cfg.delay_steps, "Delay for the delayed mode")->capture_default_str();
  eval->add_option("--steps", ev_cfg.steps)->capture_default_str();
  eval->add_option("--cfg", ev_cfg.guidance)->capture_default_str();
  eval->add_option("--prompt-template", ev_cfg.prompt_template)->capture_default_str();
  eval->add_option("--plus", ev_plus, "Positive prompt template with {noun}");
  eval->add_option("--minus", ev_minus, "Negative prompt template with {noun}");
  eval->add_option("--cosine-scale", ev_cos_scale, "Multiply cosine columns (100 for percent-style axes)")
      ->capture_default_str();
  eval->add_option("--out", ev_out, "Output CSV")->required();
  eval->add_option("--svg", ev_svg, "Scale-vs-metric plot");

  // ls
  auto* ls = app.add_subcommand("ls", "List the delta registry");
  bool ls_json = false;
  ls->add_flag("--json", ls_json);

  // serve
  auto* serve = app.add_subcommand("serve", "Run the HTTP control service");
  ServiceOptions sv_opts;
  serve->add_option("--port", sv_opts.port)->capture_default_str();
  serve->add_option("--host", sv_opts.host)->capture_default_str();
  serve->add_option("--workers", sv_opts.workers)->capture_default_str();
  serve->add_option("--cors-origin", sv_opts.cors_origin)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    if (extract->parsed()) {
      auto set = resolve_prompt_set(ex_set);
      if (!ex_name.empty()) set.attribute_name = ex_name;
      const auto encoder = make_text_encoder(g.encoder);
      ExpansionOptions opts;
      opts.fix_articles = !ex_no_fix;
      const auto r = extract_clip_diff_delta(*encoder, set, opts);
      const auto path = store_delta(r.delta, ex_out, g);
      for (const auto& w : r.warnings) std::cerr << "warning: " << w << "\n";
      print_json({{"path", path.string()},
                  {"attribute_name", r.delta.attribute_name},
                  {"pair_count", r.pair_count},
                  {"norm", r.delta.norm()}});
    } else if (train->parsed()) {
      std::tie(tr_cfg.alpha_min, tr_cfg.alpha_max) = parse_range(tr_alpha);
      std::tie(tr_cfg.alpha_exclusion_lo, tr_cfg.alpha_exclusion_hi) = parse_range(tr_excl);
      tr_cfg.anchor_mode = parse_anchor_mode(tr_anchor);
      tr_cfg.validate();
      const auto& c = tr_cfg;
      std::cout << "steps=" << c.steps << " batch=" << c.batch_size << " lr=" << c.optimizer.learning_rate
                << " betas=" << c.optimizer.beta1 << "," << c.optimizer.beta2
                << " weight_decay=" << c.optimizer.weight_decay << " alpha_range=" << c.alpha_min << ":"
                << c.alpha_max << " alpha_exclusion=" << c.alpha_exclusion_lo << ":" << c.alpha_exclusion_hi
                << " alphas_per_item=" << c.alphas_per_item << " anchor_mode=" << to_string(c.anchor_mode)
                << " seed=" << c.seed << "\n";
      if (tr_set.empty()) return 0;
      auto set = resolve_prompt_set(tr_set);
      if (!tr_name.empty()) set.attribute_name = tr_name;
      const auto encoder = make_text_encoder(g.encoder);
      const auto backbone = make_backbone(g.backbone, g.encoder);
      std::ofstream log_file;
      if (!tr_log.empty()) log_file.open(tr_log);
      const int every = std::max(1, c.steps / 10);
      const auto r = train_attribute_delta(*backbone, *encoder, set, c, [&](const TrainLogRecord& rec) {
        if (log_file) log_file << rec.to_json_line() << "\n";
        if (rec.step % every == 0 || rec.step + 1 == c.steps) std::cerr << rec.to_json_line() << "\n";
      });
      const auto path = store_delta(r.delta, tr_out, g);
      print_json({{"path", path.string()},
                  {"attribute_name", r.delta.attribute_name},
                  {"norm", r.delta.norm()},
                  {"config_digest", r.delta.config_digest}});
    } else if (invert->parsed()) {
      const auto encoder = make_text_encoder(g.encoder);
      const auto backbone = make_backbone(g.backbone, g.encoder);
      const Sample target = decode_sample(decode_png(read_file(iv_image)), backbone->image_shape());
      const auto r = learn_pair_delta(*backbone, *encoder, target, iv_caption, iv_cfg);
      write_text(iv_out, r.delta.to_json().dump(2) + "\n");
      nlohmann::json out{{"path", iv_out}, {"initial_loss", r.losses.front()}, {"final_loss", r.losses.back()}};
      if (!iv_subject.empty()) {
        const auto tp = encoder->encode(iv_caption);
        const auto span = locate_subject(tp, iv_subject);
        const auto attr = subject_row_to_attribute_delta(r.delta, span, iv_name.empty() ? iv_subject : iv_name);
        out["attribute_path"] = store_delta(attr, iv_attr_out, g).string();
      }
      print_json(out);
    } else if (apply->parsed()) {
      const auto encoder = make_text_encoder(g.encoder);
      const auto backbone = make_backbone(g.backbone, g.encoder);
      ap_cfg.prompt = ap_prompt;
      if (!ap_delta.empty()) {
        if (ap_subject.empty()) throw Error(ErrorCode::InvalidArgument, "--delta needs --subject");
        DeltaApplication a;
        a.delta = resolve_delta(ap_delta, g);
        a.subject_word = ap_subject;
        a.occurrence = parse_occurrence(ap_occ);
        a.scale = ap_scale;
        a.delay_steps = ap_delay;
        ap_cfg.applications.push_back(a);
      }
      for (const auto& e : ap_edits) ap_cfg.applications.push_back(parse_edit(e, g));
      const auto r = generate_with_deltas(*backbone, *encoder, ap_cfg);
      write_file(ap_out, sample_png(r.image));
      for (const auto& w : r.warnings) std::cerr << "warning: " << w << "\n";
      print_json({{"path", ap_out}, {"provenance", r.provenance}});
    } else if (sweep->parsed()) {
      const auto encoder = make_text_encoder(g.encoder);
      const auto backbone = make_backbone(g.backbone, g.encoder);
      sw_cfg.prompt = sw_prompt;
      const SweepAxis a1 = parse_axis(sw_axis, g);
      std::optional<SweepAxis> a2;
      if (!sw_axis2.empty()) a2 = parse_axis(sw_axis2, g);
      const auto grid = sweep_grid(*backbone, *encoder, sw_cfg, a1, a2);
      fs::create_directories(sw_out);
      nlohmann::json cells = nlohmann::json::array();
      for (const auto& c : grid.cells) {
        const std::string name = "cell_" + std::to_string(c.row) + "_" + std::to_string(c.col) + ".png";
        write_file(fs::path(sw_out) / name, sample_png(c.result.image));
        cells.push_back({{"row", c.row}, {"col", c.col}, {"scales", c.scales}, {"unmodified", c.unmodified},
                         {"image", name}});
      }
      const nlohmann::json manifest{{"rows", grid.rows}, {"cols", grid.cols}, {"cells", cells},
                                    {"base", sw_cfg.to_json()}};
      write_text(fs::path(sw_out) / "manifest.json", manifest.dump(2) + "\n");
      print_json({{"path", sw_out}, {"cells", grid.cells.size()}});
    } else if (eval->parsed()) {
      const auto encoder = make_text_encoder(g.encoder);
      const auto backbone = make_backbone(g.backbone, g.encoder);
      const auto* toy = dynamic_cast<const ToyLinearBackbone*>(backbone.get());
      if (!toy) throw Error(ErrorCode::AdapterUnavailable, "metric adapters exist only for the toy backbone");
      const auto delta = resolve_delta(ev_delta, g);
      if (ev_plus.empty() || ev_minus.empty()) {
        // Default to the first tuple of the matching built-in prompt set.
        const auto set = builtin_prompt_set(delta->attribute_name);
        const std::string prefix = set.prefixes.empty() ? "" : set.prefixes.front();
        if (ev_plus.empty()) ev_plus = templ_from_phrase(set.tuples.front().positive, prefix);
        if (ev_minus.empty()) ev_minus = templ_from_phrase(set.tuples.front().negative, prefix);
      }
      ev_cfg.nouns = ev_nouns;
      ev_cfg.scales = ev_scales;
      if (ev_seeds < 1) throw Error(ErrorCode::InvalidArgument, "--seeds must be >= 1");
      for (int s = 0; s < ev_seeds; ++s) ev_cfg.seeds.push_back(static_cast<std::uint64_t>(s));
      ev_cfg.modes.clear();
      for (const auto& m : ev_modes) {
        if (m == "normal") ev_cfg.modes.push_back(SamplingMode::Normal);
        else if (m == "delayed") ev_cfg.modes.push_back(SamplingMode::Delayed);
        else throw Error(ErrorCode::InvalidArgument, "unknown mode '" + m + "'");
      }
      ev_cfg.plus_template = ev_plus;
      ev_cfg.minus_template = ev_minus;
      const auto adapters = toy_metric_adapters(encoder, toy->weights());
      const auto table = sweep_evaluate(*backbone, *encoder, adapters, delta, ev_cfg);
      write_text(ev_out, table.to_csv(ev_cos_scale));
      if (!ev_svg.empty()) write_text(ev_svg, table.to_svg());
      nlohmann::json agg = nlohmann::json::array();
      for (const auto& a : table.aggregates)
        agg.push_back({{"scale", a.scale},
                       {"mode", std::string(to_string(a.mode))},
                       {"delta_clip_bi", {a.delta_clip_bi.mean, a.delta_clip_bi.stddev}},
                       {"perceptual_change", {a.perceptual_change.mean, a.perceptual_change.stddev}}});
      print_json({{"path", ev_out}, {"rows", table.rows.size()}, {"aggregates", agg}});
    } else if (ls->parsed()) {
      Registry reg(g.registry);
      for (const auto& w : reg.warnings()) std::cerr << "warning: " << w << "\n";
      if (ls_json) {
        nlohmann::json out = nlohmann::json::array();
        for (const auto& e : reg.list())
          out.push_back({{"name", e.name},
                         {"encoder_id", e.encoder_id},
                         {"method", std::string(to_string(e.delta->method))},
                         {"embedding_dim", e.delta->dim()},
                         {"training_nouns", e.delta->training_nouns},
                         {"path", e.path.string()}});
        print_json(out);
      } else {
        for (const auto& e : reg.list())
          std::cout << e.name << "\t" << e.encoder_id << "\t" << to_string(e.delta->method) << "\t"
                    << e.delta->dim() << "\t" << e.path.string() << "\n";
      }
    } else if (serve->parsed()) {
      const auto encoder = make_text_encoder(g.encoder);
      const auto backbone = make_backbone(g.backbone, g.encoder);
      ControlService service(sv_opts, backbone, encoder, std::make_shared<Registry>(g.registry));
      const int port = service.start();
      std::cerr << "listening on http://" << sv_opts.host << ":" << port << "\n";
      service.wait();
    }
  } catch (const Error& e) {
    std::cerr << nlohmann::json{{"error", {{"code", std::string(to_string(e.code()))}, {"message", e.what()}}}}.dump() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << nlohmann::json{{"error", {{"code", "Internal"}, {"message", e.what()}}}}.dump() << "\n";
    return 2;
  }
  return 0;
}
