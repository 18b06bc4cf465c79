#include "ctok/backbone.hpp"
#include "ctok/error.hpp"
#include "ctok/gair.hpp"
#include "ctok/image.hpp"
#include "ctok/metrics.hpp"
#include "ctok/report.hpp"
#include "ctok/retrieval.hpp"
#include "ctok/server.hpp"
#include "ctok/studio.hpp"
#include "ctok/toy.hpp"
#include "ctok/trainer.hpp"
#include "ctok/util.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <csignal>
#include <iostream>

namespace fs = std::filesystem;
using namespace ctok;
using nlohmann::json;

namespace {

std::vector<std::string> comma_list(const std::string& text) {
  std::vector<std::string> out;
  for (auto& s : split(text, ',')) {
    if (auto t = trim(s); !t.empty()) out.push_back(t);
  }
  return out;
}

std::vector<double> number_list(const std::string& text) {
  std::vector<double> out;
  for (const auto& s : comma_list(text)) {
    try {
      out.push_back(std::stod(s));
    } catch (const std::exception&) {
      throw Error(ErrorCode::InvalidArgument, "not a number: '" + s + "'");
    }
  }
  return out;
}

std::vector<fs::path> pngs_in(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error(ErrorCode::Io, "not a directory: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() == ".png") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<Image> read_images(const fs::path& dir) {
  std::vector<Image> out;
  for (const auto& p : pngs_in(dir)) out.push_back(read_png(p));
  if (out.empty()) throw Error(ErrorCode::NoImages, "no .png files in " + dir.string());
  return out;
}

Backbone backbone_from(const std::string& arg) {
  return arg == "toy" ? load_backbone(default_toy_spec()) : load_backbone_file(arg);
}

TokenArtifact read_token(const fs::path& path) { return parse_token_artifact(read_file(path)); }

struct Common {
  std::string backbone = "toy";
};

struct ToyDataArgs {
  std::string out;
  std::string color = "blue";
  std::size_t count = 16;
  std::size_t per_class = 4;
  std::uint64_t seed = 1;
};

int cmd_toy_data(const ToyDataArgs& a) {
  const fs::path root = a.out;
  fs::create_directories(root / "concept");
  fs::create_directories(root / "corpus");
  const auto concept_imgs = toy::concept_images(a.color, a.count, a.seed);
  for (std::size_t i = 0; i < concept_imgs.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "%03zu.png", i);
    write_png(root / "concept" / name, concept_imgs[i]);
  }
  std::vector<ManifestRow> rows;
  std::uint64_t salt = 0;
  for (const auto& color : toy::color_words()) {
    const auto imgs = toy::class_images({color}, a.per_class, mix_seed(a.seed, 0xDA7A + salt++));
    for (std::size_t i = 0; i < imgs.size(); ++i) {
      const std::string file = color + "_" + std::to_string(i) + ".png";
      write_png(root / "corpus" / file, imgs[i]);
      rows.push_back({file, color, "a photo of a " + color + " square"});
    }
  }
  write_file_atomic(root / "corpus" / "manifest.csv", write_manifest(rows));
  std::cout << concept_imgs.size() << " concept images, " << rows.size() << " corpus images\n";
  return 0;
}

struct TrainArgs {
  std::string images;
  std::string parent = "square";
  std::string attributes;
  std::size_t top_n = 100;
  std::string config;
  std::optional<std::size_t> iterations;
  std::optional<double> lr;
  std::optional<double> lambda_sd;
  std::optional<double> lambda_ce;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> num_tokens;
  std::optional<std::string> optimizer;
  bool no_subspace = false;
  std::string negative_cache;
  std::string out = "token.json";
};

int cmd_train(const Common& c, const TrainArgs& a) {
  const auto bb = backbone_from(c.backbone);
  const auto images = read_images(a.images);
  json doc = a.config.empty() ? json::object() : json::parse(read_file(a.config));
  if (a.iterations) doc["iterations"] = *a.iterations;
  if (a.lr) doc["learning_rate"] = *a.lr;
  if (a.lambda_sd) doc["lambda_sd"] = *a.lambda_sd;
  if (a.lambda_ce) doc["lambda_ce"] = *a.lambda_ce;
  if (a.seed) doc["seed"] = *a.seed;
  if (a.num_tokens) doc["num_tokens"] = *a.num_tokens;
  if (a.optimizer) doc["optimizer"] = *a.optimizer;
  const auto config = TrainingConfig::from_json(doc);

  std::optional<AttributeSubspace> subspace;
  if (!a.no_subspace) {
    auto attrs = comma_list(a.attributes);
    const bool selected = attrs.empty();
    if (selected) attrs = select_attributes(toy::attribute_candidates(), images, a.top_n, bb.encoders);
    const auto vecs = attribute_embeddings(attrs, bb.text());
    subspace = build_subspace(attrs, vecs,
                              config.subspace_rank.value_or(default_subspace_rank(vecs.size(), bb.text().token_dim())));
    if (selected) subspace->source = SubspaceSource::CorrelationSelected;
  }
  TrainOptions options;
  if (!a.negative_cache.empty()) options.negative_cache = a.negative_cache;
  options.concept_id = fs::path(a.images).filename().string();
  options.progress_every = std::max<std::size_t>(1, config.iterations / 10);
  options.on_progress = [](const TrainingProgress& p) {
    std::cerr << "iter " << p.iteration << "/" << p.iterations << " total " << p.total << " sd " << p.sd << " ce "
              << p.ce << "\n";
  };
  const auto artifact = train_token(images, a.parent, subspace ? &*subspace : nullptr, config, bb, options);
  write_file_atomic(a.out, serialize_token_artifact(artifact));
  std::cout << a.out << " " << artifact.token.ref() << "\n";
  return 0;
}

struct QueryArgs {
  std::string token;
  std::string caption = "image of a {*} {c}";
  std::string attributes;
  double weight = 1.0;
};

ComposedQuery compose_from(const QueryArgs& q, const TokenArtifact& artifact, const Backbone& bb) {
  return compose_query(q.caption, artifact.token, artifact.token.parent_concept, comma_list(q.attributes), q.weight,
                       bb.text());
}

struct GenerateArgs {
  QueryArgs query;
  std::size_t count = 4;
  std::uint64_t seed = 0;
  std::string out = "previews";
};

int cmd_generate(const Common& c, const GenerateArgs& a) {
  const auto bb = backbone_from(c.backbone);
  const auto artifact = read_token(a.query.token);
  const auto q = compose_from(a.query, artifact, bb);
  fs::create_directories(a.out);
  for (std::size_t j = 0; j < a.count; ++j) {
    const auto img = bb.diffusion->generate(q.feature.values, preview_seed(a.seed, q.weight, j));
    const auto path = fs::path(a.out) / ("preview_" + std::to_string(j) + ".png");
    write_png(path, img);
    std::cout << path.string() << "\n";
  }
  return 0;
}

struct IndexArgs {
  std::string manifest;
  std::string images;
  std::string out = "corpus.idx";
};

int cmd_index(const Common& c, const IndexArgs& a) {
  const auto bb = backbone_from(c.backbone);
  std::vector<IndexImage> items;
  if (!a.manifest.empty()) {
    const fs::path manifest = a.manifest;
    for (const auto& row : read_manifest(manifest)) {
      items.push_back({row.image_path, read_png(manifest.parent_path() / row.image_path), row.class_id});
    }
  } else {
    for (const auto& p : pngs_in(a.images)) items.push_back({p.filename().string(), read_png(p), std::nullopt});
  }
  const auto index = build_index(items, bb.image());
  save_index(index, a.out);
  std::cout << a.out << " " << index.id() << " " << index.size() << "\n";
  return 0;
}

struct RetrieveArgs {
  std::string index;
  QueryArgs query;
  std::string text;
  std::size_t top_k = 5;
};

int cmd_retrieve(const Common& c, const RetrieveArgs& a) {
  const auto bb = backbone_from(c.backbone);
  const auto index = load_index(a.index);
  Vec q;
  if (!a.text.empty()) {
    q = encode_plain_text(a.text, bb.text()).values;
  } else {
    if (a.query.token.empty()) throw Error(ErrorCode::InvalidArgument, "retrieve needs --token or --text");
    q = compose_from(a.query, read_token(a.query.token), bb).feature.values;
  }
  const auto ranked = rank_scored(q, index);
  for (std::size_t i = 0; i < std::min(a.top_k, ranked.size()); ++i) {
    std::printf("%zu %s %.6f\n", i + 1, ranked[i].id.c_str(), ranked[i].score);
  }
  return 0;
}

struct GairArgs {
  QueryArgs query;
  std::string images;
  std::string grid;
  std::size_t previews = 4;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  std::string out;
};

int cmd_gair(const Common& c, const GairArgs& a) {
  const auto bb = backbone_from(c.backbone);
  const auto artifact = read_token(a.query.token);
  GairRequest req;
  req.caption = a.query.caption;
  req.parent = artifact.token.parent_concept;
  req.attributes = comma_list(a.query.attributes);
  if (!a.grid.empty()) req.weight_grid = number_list(a.grid);
  req.previews_per_weight = a.previews;
  req.seed = a.seed;
  req.workers = a.workers;
  req.reference_images = read_images(a.images);
  const auto result = run_gair(req, artifact.token, bb.text(), bb.image(), *bb.diffusion);
  if (!a.out.empty()) {
    fs::create_directories(a.out);
    write_file_atomic(fs::path(a.out) / "gair.json", gair_result_to_json(result).dump(2) + "\n");
    write_file_atomic(fs::path(a.out) / "gair_curve.csv", gair_curve_csv(result));
  }
  std::cout << result.optimal_weight << "\n";
  return 0;
}

struct EvalArgs {
  std::string metric = "mrr";
  std::string ranks;
  std::string scores;
  std::string labels;
  QueryArgs query;
  std::string positives;
  std::string negatives;
  bool json_out = false;
};

int cmd_eval(const Common& c, const EvalArgs& a) {
  EvalReport report;
  report.metric = a.metric;
  if (a.metric == "mrr") {
    std::vector<std::size_t> ranks;
    for (double r : number_list(a.ranks)) {
      if (r < 1 || r != std::floor(r)) throw Error(ErrorCode::InvalidArgument, "ranks must be positive integers");
      ranks.push_back(static_cast<std::size_t>(r));
    }
    report.value = mrr(ranks);
    report.per_query.reserve(ranks.size());
    for (auto r : ranks) report.per_query.push_back(1.0 / static_cast<double>(r));
  } else if (a.metric == "auc") {
    const auto s = number_list(a.scores);
    std::vector<int> l;
    for (double v : number_list(a.labels)) l.push_back(v != 0.0 ? 1 : 0);
    report.value = auc_roc(s, l);
  } else if (a.metric == "token-vs-parent") {
    const auto bb = backbone_from(c.backbone);
    const auto artifact = read_token(a.query.token);
    report.value = token_vs_parent_accuracy(artifact.token, a.query.caption, read_images(a.positives),
                                            read_images(a.negatives), bb.encoders);
  } else {
    throw Error(ErrorCode::InvalidArgument, "unknown metric '" + a.metric + "'");
  }
  if (a.json_out) {
    std::cout << report.to_json().dump(2) << "\n";
  } else {
    std::printf("%.5f\n", report.value);
  }
  return 0;
}

struct ReportArgs {
  std::string token;
  std::string attributes;
  std::string gair;
  std::string out = "report";
};

int cmd_report(const Common& c, const ReportArgs& a) {
  const auto bb = backbone_from(c.backbone);
  const auto artifact = read_token(a.token);
  auto attrs = comma_list(a.attributes);
  if (attrs.empty() && artifact.subspace) attrs = artifact.subspace->attributes;
  if (attrs.empty()) throw Error(ErrorCode::EmptyAttributes, "report needs --attributes or a token with a subspace");
  const auto vecs = attribute_embeddings(attrs, bb.text());
  std::vector<std::pair<std::string, Vec>> labeled;
  for (std::size_t i = 0; i < attrs.size(); ++i) labeled.emplace_back(attrs[i], vecs[i]);
  labeled.emplace_back("*", artifact.token.mean_vector());
  const auto aff = affinity(labeled);
  const auto norms = norm_report(vecs, artifact.token);

  std::optional<GairResult> gair;
  if (!a.gair.empty()) {
    const auto doc = json::parse(read_file(a.gair));
    gair.emplace();
    gair->weights = doc.at("weights").get<std::vector<double>>();
    gair->scores = doc.at("scores").get<std::vector<double>>();
    gair->optimal_weight = doc.at("optimal_weight").get<double>();
  }
  const auto files = write_report(a.out, aff, norms, attrs, gair ? &*gair : nullptr);
  for (const auto& f : files.written) std::cout << f.string() << "\n";
  return 0;
}

struct ServeArgs {
  std::string config;
  std::string host = "127.0.0.1";
  int port = 8080;
};

StudioServer* g_server = nullptr;

int cmd_serve(const ServeArgs& a) {
  auto config = load_studio_config(a.config.empty() ? std::nullopt : std::optional<fs::path>(a.config));
  Studio studio(std::move(config));
  StudioServer server(studio);
  const int port = server.bind(a.host, a.port);
  std::cerr << "listening on " << a.host << ":" << port << " root " << studio.config().root.string() << "\n";
  g_server = &server;
  std::signal(SIGINT, [](int) {
    if (g_server) g_server->stop();
  });
  server.run();
  g_server = nullptr;
  return 0;
}

void add_query_options(CLI::App* app, QueryArgs& q, bool token_required) {
  auto* opt = app->add_option("--token", q.token, "token artifact (JSON)");
  if (token_required) opt->required();
  app->add_option("--caption", q.caption, "caption template with {*} and optional {c}");
  app->add_option("--attributes", q.attributes, "comma-separated attribute words");
  app->add_option("--weight", q.weight, "token weight w in [0, 1]");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"customtok: attribute-subspace custom tokens, query composition and retrieval"};
  app.require_subcommand(1);
  Common common;
  app.add_option("--backbone", common.backbone, "backbone spec file, or 'toy'");

  ToyDataArgs toy_args;
  auto* toy_cmd = app.add_subcommand("toy-data", "write a toy concept set and a labelled toy corpus");
  toy_cmd->add_option("--out", toy_args.out)->required();
  toy_cmd->add_option("--color", toy_args.color);
  toy_cmd->add_option("--count", toy_args.count);
  toy_cmd->add_option("--per-class", toy_args.per_class);
  toy_cmd->add_option("--seed", toy_args.seed);

  TrainArgs train_args;
  auto* train = app.add_subcommand("train", "learn a custom token from concept images");
  train->add_option("--images", train_args.images, "directory of concept PNGs")->required();
  train->add_option("--parent", train_args.parent);
  train->add_option("--attributes", train_args.attributes, "comma-separated; empty selects from the toy pool");
  train->add_option("--top-n", train_args.top_n);
  train->add_option("--config", train_args.config, "training config JSON");
  train->add_option("--iterations", train_args.iterations);
  train->add_option("--lr", train_args.lr);
  train->add_option("--lambda-sd", train_args.lambda_sd);
  train->add_option("--lambda-ce", train_args.lambda_ce);
  train->add_option("--seed", train_args.seed);
  train->add_option("--num-tokens", train_args.num_tokens);
  train->add_option("--optimizer", train_args.optimizer);
  train->add_flag("--no-subspace", train_args.no_subspace);
  train->add_option("--negative-cache", train_args.negative_cache);
  train->add_option("--out", train_args.out);

  GenerateArgs gen_args;
  auto* gen = app.add_subcommand("generate", "sample images for a composed query");
  add_query_options(gen, gen_args.query, true);
  gen->add_option("--count", gen_args.count);
  gen->add_option("--seed", gen_args.seed);
  gen->add_option("--out", gen_args.out);

  IndexArgs index_args;
  auto* index = app.add_subcommand("index", "build a retrieval index");
  index->add_option("--manifest", index_args.manifest, "CSV with image_path,class_id,caption");
  index->add_option("--images", index_args.images, "directory of PNGs");
  index->add_option("--out", index_args.out);

  RetrieveArgs ret_args;
  auto* retrieve = app.add_subcommand("retrieve", "rank an index against a query");
  retrieve->add_option("--index", ret_args.index)->required();
  add_query_options(retrieve, ret_args.query, false);
  retrieve->add_option("--text", ret_args.text, "plain-text query instead of a token");
  retrieve->add_option("--top-k", ret_args.top_k);

  GairArgs gair_args;
  auto* gair = app.add_subcommand("gair", "pick the token weight by generation-aided scoring");
  add_query_options(gair, gair_args.query, true);
  gair->add_option("--images", gair_args.images, "directory of concept PNGs")->required();
  gair->add_option("--grid", gair_args.grid, "comma-separated weights");
  gair->add_option("--previews", gair_args.previews);
  gair->add_option("--seed", gair_args.seed);
  gair->add_option("--workers", gair_args.workers);
  gair->add_option("--out", gair_args.out);

  EvalArgs eval_args;
  auto* eval = app.add_subcommand("eval", "compute an evaluation metric");
  eval->add_option("--metric", eval_args.metric, "mrr | auc | token-vs-parent");
  eval->add_option("--ranks", eval_args.ranks);
  eval->add_option("--scores", eval_args.scores);
  eval->add_option("--labels", eval_args.labels);
  add_query_options(eval, eval_args.query, false);
  eval->add_option("--positives", eval_args.positives);
  eval->add_option("--negatives", eval_args.negatives);
  eval->add_flag("--json", eval_args.json_out);

  ReportArgs rep_args;
  auto* report = app.add_subcommand("report", "write affinity, norm and GAIR plots with CSVs");
  report->add_option("--token", rep_args.token)->required();
  report->add_option("--attributes", rep_args.attributes);
  report->add_option("--gair", rep_args.gair, "gair.json from the gair subcommand");
  report->add_option("--out", rep_args.out);

  ServeArgs serve_args;
  auto* serve = app.add_subcommand("serve", "run the studio HTTP service");
  serve->add_option("--config", serve_args.config);
  serve->add_option("--host", serve_args.host);
  serve->add_option("--port", serve_args.port);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*toy_cmd) return cmd_toy_data(toy_args);
    if (*train) return cmd_train(common, train_args);
    if (*gen) return cmd_generate(common, gen_args);
    if (*index) return cmd_index(common, index_args);
    if (*retrieve) return cmd_retrieve(common, ret_args);
    if (*gair) return cmd_gair(common, gair_args);
    if (*eval) return cmd_eval(common, eval_args);
    if (*report) return cmd_report(common, rep_args);
    if (*serve) return cmd_serve(serve_args);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
