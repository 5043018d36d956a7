// capkit: caption metrics, visual augmentation, encoder-decoder training,
// t-SNE diagnostics, and caption-cleansing workflows behind one binary.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "capkit/capkit.hpp"
#include "capkit/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct ScoreArgs {
  std::string cand, refs, synonyms;
  bool smooth_bleu = false;
  bool no_stem = false;
  double rouge_beta = 1.2;
};

int run_score(const ScoreArgs& args) {
  auto candidates = capkit::read_candidates(args.cand);
  auto references = capkit::read_caption_corpus(args.refs);
  auto pairs = capkit::make_scored_pairs(candidates, references);
  capkit::MetricConfig config;
  config.smooth_bleu = args.smooth_bleu;
  config.rouge_beta = args.rouge_beta;
  config.meteor_stem = !args.no_stem;
  if (!args.synonyms.empty()) config.synonyms = capkit::SynonymTable::from_file(args.synonyms);
  capkit::MetricReport report = capkit::evaluate(pairs, config);
  std::cout << capkit::report_to_json(report).dump(2) << "\n";
  return 0;
}

struct AugmentArgs {
  std::string in_dir, out_dir, plan_file, grid;
};

void augment_one_video(const std::string& in_dir, const std::string& out_dir,
                       const capkit::AugmentationPlan& plan) {
  capkit::VideoFrames video = capkit::ppm::read_video(in_dir);
  capkit::VideoFrames altered = capkit::apply_plan(video, plan);
  capkit::ppm::write_video(out_dir, altered);
}

bool has_ppm_files(const std::string& dir) {
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".ppm") return true;
  return false;
}

int run_augment(const AugmentArgs& args) {
  if (!args.grid.empty()) {
    std::vector<capkit::NamedPlan> plans;
    if (args.grid == "train") {
      plans = capkit::grid_train();
    } else if (args.grid == "test-only") {
      plans = capkit::grid_test_only();
    } else {
      throw capkit::Error("unknown grid '" + args.grid + "' (expected train or test-only)");
    }
    fs::path out = args.out_dir.empty() ? fs::path(".") : fs::path(args.out_dir);
    fs::create_directories(out);
    json written = json::array();
    for (const auto& [name, plan] : plans) {
      fs::path file = out / (name + ".json");
      std::ofstream f(file);
      if (!f) throw capkit::IoError("cannot write " + file.string());
      f << capkit::plan_to_json(plan).dump(2) << "\n";
      written.push_back(file.string());
    }
    std::cout << written.dump(2) << "\n";
    return 0;
  }

  std::ifstream plan_in(args.plan_file);
  if (!plan_in) throw capkit::IoError("cannot open plan " + args.plan_file);
  json plan_json;
  try {
    plan_in >> plan_json;
  } catch (const json::exception& e) {
    throw capkit::MalformedPlan(args.plan_file + ": " + e.what());
  }
  capkit::AugmentationPlan plan = capkit::plan_from_json(plan_json);

  if (has_ppm_files(args.in_dir)) {
    augment_one_video(args.in_dir, args.out_dir, plan);
  } else {
    for (const auto& entry : fs::directory_iterator(args.in_dir))
      if (entry.is_directory())
        augment_one_video(entry.path().string(),
                          (fs::path(args.out_dir) / entry.path().filename()).string(), plan);
  }
  return 0;
}

struct FeaturesExtractArgs {
  std::string in_dir, out;
  size_t stride = 5;
  int dim = 64;
};

int run_features_extract(const FeaturesExtractArgs& args) {
  if (has_ppm_files(args.in_dir)) {
    capkit::VideoFrames video = capkit::ppm::read_video(args.in_dir);
    capkit::FeatureSequence seq = capkit::stub_extract(video, args.stride, args.dim);
    capkit::write_features(args.out, seq);
  } else {
    fs::create_directories(args.out);
    for (const auto& entry : fs::directory_iterator(args.in_dir)) {
      if (!entry.is_directory()) continue;
      capkit::VideoFrames video = capkit::ppm::read_video(entry.path().string());
      capkit::FeatureSequence seq = capkit::stub_extract(video, args.stride, args.dim);
      capkit::write_features(
          (fs::path(args.out) / (entry.path().filename().string() + ".ften")).string(), seq);
    }
  }
  return 0;
}

capkit::FeatureSequence features_for(const std::string& dir, const std::string& video_id) {
  fs::path file = fs::path(dir) / (video_id + ".ften");
  if (!fs::exists(file)) throw capkit::IoError("no feature file for video " + video_id);
  return capkit::read_features(file.string(), video_id);
}

struct TrainArgs {
  std::string features_dir, captions, val_captions, out, embeddings;
  double lr = 0.1;
  size_t batch = 64;
  int patience = 10;
  uint64_t seed = 0;
  int hidden = 1000;
  int embedding_dim = 300;
  int max_epochs = 500;
  size_t max_len = 30;
};

int run_train(const TrainArgs& args) {
  capkit::CaptionCorpus train_corpus = capkit::read_caption_corpus(args.captions);
  capkit::CaptionCorpus val_corpus = capkit::read_caption_corpus(args.val_captions);

  std::vector<capkit::TokenizedSentence> all_sentences;
  for (const auto& corpus : {train_corpus, val_corpus})
    for (const auto& set : corpus)
      for (const auto& caption : set.captions) all_sentences.push_back(capkit::tokenize(caption));
  capkit::Vocabulary vocab = capkit::build_vocab(all_sentences);

  capkit::EmbeddingTable embeddings =
      args.embeddings.empty()
          ? capkit::random_embeddings(vocab, args.seed, args.embedding_dim)
          : capkit::load_embeddings(args.embeddings, vocab, args.seed, args.embedding_dim);

  std::vector<capkit::TrainSample> train;
  int feature_dim = -1;
  for (const auto& set : train_corpus) {
    capkit::FeatureSequence seq = features_for(args.features_dir, set.video_id);
    if (feature_dim < 0) feature_dim = seq.dim;
    for (const auto& caption : set.captions)
      train.push_back({seq, capkit::tokenize(caption, /*attach_tags=*/true)});
  }
  std::vector<capkit::ValSample> val;
  for (const auto& set : val_corpus) {
    capkit::ValSample sample;
    sample.features = features_for(args.features_dir, set.video_id);
    sample.video_id = set.video_id;
    for (const auto& caption : set.captions) sample.references.push_back(capkit::tokenize(caption));
    val.push_back(std::move(sample));
  }
  if (train.empty()) throw capkit::Error("train: no training samples");

  capkit::Seq2SeqParams params =
      capkit::init_params(vocab, embeddings, feature_dim, args.hidden, args.seed);
  capkit::TrainConfig config;
  config.lr = args.lr;
  config.batch_size = args.batch;
  config.patience = args.patience;
  config.seed = args.seed;
  config.max_epochs = args.max_epochs;
  config.decode_max_len = args.max_len;

  capkit::TrainResult result = capkit::sgd_train(params, train, val, config);
  capkit::save_model(args.out, result.best);

  json log = json::array();
  for (const auto& entry : result.log)
    log.push_back({{"train_loss", entry.train_loss}, {"val_meteor", entry.val_meteor}});
  std::cout << json{{"model", args.out},
                    {"epochs", result.log.size()},
                    {"best_epoch", result.best_epoch},
                    {"log", log}}
                   .dump(2)
            << "\n";
  return 0;
}

struct DecodeArgs {
  std::string model, features_dir;
  size_t max_len = 30;
};

int run_decode(const DecodeArgs& args) {
  capkit::Seq2SeqParams params = capkit::load_model(args.model);
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(args.features_dir))
    if (entry.is_regular_file() && entry.path().extension() == ".ften")
      files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw capkit::IoError("no .ften files in " + args.features_dir);
  for (const auto& file : files) {
    std::string video_id = file.stem().string();
    capkit::FeatureSequence seq = capkit::read_features(file.string(), video_id);
    capkit::TokenizedSentence decoded = capkit::greedy_decode(params, seq, args.max_len);
    std::string caption;
    for (size_t i = 0; i < decoded.tokens.size(); ++i) {
      if (i) caption += " ";
      caption += decoded.tokens[i];
    }
    std::cout << json{{"video_id", video_id}, {"caption", caption}}.dump() << "\n";
  }
  return 0;
}

struct TsneArgs {
  std::vector<std::string> features;  // label=FILE
  double perplexity = 30.0;
  int iters = 1000;
  uint64_t seed = 0;
  int k = 10;
  std::string out, svg;
};

int run_tsne(const TsneArgs& args) {
  std::vector<std::vector<float>> rows;
  std::vector<std::string> labels;
  int dim = -1;
  for (const auto& spec : args.features) {
    size_t eq = spec.find('=');
    if (eq == std::string::npos)
      throw capkit::Error("--features expects label=FILE, got '" + spec + "'");
    std::string label = spec.substr(0, eq);
    capkit::FeatureSequence seq = capkit::read_features(spec.substr(eq + 1));
    if (dim < 0) dim = seq.dim;
    if (seq.dim != dim) throw capkit::Error("feature files disagree on dim");
    for (auto& v : seq.vectors) {
      rows.push_back(std::move(v));
      labels.push_back(label);
    }
  }
  if (rows.size() < 4) throw capkit::Error("tsne needs at least 4 points");

  Eigen::MatrixXd points(static_cast<Eigen::Index>(rows.size()), dim);
  for (size_t i = 0; i < rows.size(); ++i)
    for (int j = 0; j < dim; ++j)
      points(static_cast<Eigen::Index>(i), j) = rows[i][static_cast<size_t>(j)];

  capkit::Embedding2D embedding = capkit::tsne(points, args.perplexity, args.iters, args.seed);
  std::ofstream csv(args.out);
  if (!csv) throw capkit::IoError("cannot write " + args.out);
  csv << "label,x,y\n";
  for (Eigen::Index i = 0; i < embedding.coords.rows(); ++i)
    csv << labels[static_cast<size_t>(i)] << "," << embedding.coords(i, 0) << ","
        << embedding.coords(i, 1) << "\n";

  capkit::LabeledPoints data{points, labels};
  int k = std::min<int>(args.k, static_cast<int>(rows.size()) - 1);
  auto report = capkit::separation_report(data, k);
  json purity = json::object();
  for (const auto& entry : report) purity[entry.label] = entry.purity;
  std::cout << json{{"coords", args.out},
                    {"k", k},
                    {"purity", purity},
                    {"final_kl", embedding.kl_trace.empty() ? 0.0 : embedding.kl_trace.back()},
                    {"note", capkit::separation_note()}}
                   .dump(2)
            << "\n";

  if (!args.svg.empty()) capkit::write_scatter_svg(args.svg, embedding, labels);
  return 0;
}

struct CleanseArgs {
  std::string corpus, annotations, out, split;
  size_t rounds = 23;
  std::string synonyms;
  bool smooth_bleu = false;
};

int run_cleanse_stats(const CleanseArgs& args) {
  capkit::CaptionCorpus corpus = capkit::read_caption_corpus(args.corpus);
  auto records = capkit::read_annotations(args.annotations);
  size_t total = 0;
  for (const auto& set : corpus) total += set.captions.size();
  capkit::CleanseStats stats = capkit::error_stats(records, total);
  json breakdown = json::object();
  for (const auto& [cls, share] : stats.breakdown) breakdown[capkit::to_string(cls)] = share;
  std::cout << json{{"total_captions", stats.total_captions},
                    {"error_captions", stats.error_captions},
                    {"error_rate", stats.error_rate},
                    {"breakdown", breakdown}}
                   .dump(2)
            << "\n";
  return 0;
}

int run_cleanse_apply(const CleanseArgs& args) {
  capkit::CaptionCorpus corpus = capkit::read_caption_corpus(args.corpus);
  auto records = capkit::read_annotations(args.annotations);
  try {
    capkit::CaptionCorpus corrected = capkit::apply_corrections(corpus, records);
    capkit::write_caption_corpus(args.out, corrected);
  } catch (const capkit::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    for (const auto& v : e.violations()) std::cerr << "  " << v << "\n";
    return 1;
  }
  std::cout << json{{"corrected", args.out}}.dump(2) << "\n";
  return 0;
}

int run_human_perf(const CleanseArgs& args) {
  capkit::CaptionCorpus corpus = capkit::read_caption_corpus(args.corpus);
  if (!args.split.empty()) {
    capkit::CaptionCorpus filtered;
    for (const auto& set : corpus)
      if (set.split == args.split) filtered.push_back(set);
    corpus = std::move(filtered);
  }
  capkit::MetricConfig config;
  config.smooth_bleu = args.smooth_bleu;
  if (!args.synonyms.empty()) config.synonyms = capkit::SynonymTable::from_file(args.synonyms);
  capkit::HumanPerformance perf = capkit::human_performance(corpus, args.rounds, config);
  std::cout << json{{"rounds", args.rounds},
                    {"mean", capkit::report_to_json(perf.mean)},
                    {"stddev", capkit::report_to_json(perf.stddev)}}
                   .dump(2)
            << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"capkit: video-description input processing and evaluation toolkit"};
  app.set_version_flag("--version", capkit::kVersion);
  app.require_subcommand(1);

  ScoreArgs score_args;
  auto* score = app.add_subcommand("score", "Score candidate captions against references");
  score->add_option("--cand", score_args.cand, "candidates JSONL: {video_id, caption}")
      ->required();
  score->add_option("--refs", score_args.refs, "references JSONL: {video_id, captions}")
      ->required();
  score->add_option("--synonyms", score_args.synonyms, "synonym sets, one token group per line");
  score->add_flag("--smooth-bleu", score_args.smooth_bleu, "add-half smoothing for zero p_n");
  score->add_flag("--no-stem", score_args.no_stem, "disable the METEOR stemming stage");
  score->add_option("--rouge-beta", score_args.rouge_beta, "ROUGE-L beta (default 1.2)");

  AugmentArgs augment_args;
  auto* augment = app.add_subcommand("augment", "Apply a transform plan or emit built-in grids");
  augment->add_option("--in", augment_args.in_dir, "frames directory (one video or many)");
  augment->add_option("--out", augment_args.out_dir, "output directory");
  augment->add_option("--plan", augment_args.plan_file, "JSON transform plan");
  augment->add_option("--grid", augment_args.grid, "emit plan files: train | test-only");
  augment->callback([&] {
    if (augment_args.grid.empty() &&
        (augment_args.in_dir.empty() || augment_args.out_dir.empty() ||
         augment_args.plan_file.empty()))
      throw CLI::ValidationError("augment", "need --in/--out/--plan or --grid");
  });

  FeaturesExtractArgs fx_args;
  auto* fx = app.add_subcommand("features-extract", "Deterministic stub feature extractor");
  fx->add_option("--in", fx_args.in_dir, "frames directory (one video or many)")->required();
  fx->add_option("--out", fx_args.out, "output .ften file or directory")->required();
  fx->add_option("--stride", fx_args.stride, "sample one frame every N (default 5)");
  fx->add_option("--dim", fx_args.dim, "feature dimensionality, multiple of 4 (default 64)");

  TrainArgs train_args;
  auto* train = app.add_subcommand("train", "Train the encoder-decoder captioner");
  train->add_option("--features", train_args.features_dir, "directory of <video_id>.ften files")
      ->required();
  train->add_option("--captions", train_args.captions, "training corpus JSONL")->required();
  train->add_option("--val-captions", train_args.val_captions, "validation corpus JSONL")
      ->required();
  train->add_option("--out", train_args.out, "model checkpoint path")->required();
  train->add_option("--embeddings", train_args.embeddings, "GloVe-layout embedding file");
  train->add_option("--lr", train_args.lr, "learning rate (default 0.1)");
  train->add_option("--batch", train_args.batch, "batch size (default 64)");
  train->add_option("--patience", train_args.patience, "early-stopping patience (default 10)");
  train->add_option("--seed", train_args.seed, "RNG seed");
  train->add_option("--hidden", train_args.hidden, "hidden state size (default 1000)");
  train->add_option("--embedding-dim", train_args.embedding_dim,
                    "embedding size when no file is given (default 300)");
  train->add_option("--max-epochs", train_args.max_epochs, "epoch cap (default 500)");
  train->add_option("--max-len", train_args.max_len, "decode length cap (default 30)");

  DecodeArgs decode_args;
  auto* decode = app.add_subcommand("decode", "Greedy-decode captions for feature files");
  decode->add_option("--model", decode_args.model, "model checkpoint")->required();
  decode->add_option("--features", decode_args.features_dir, "directory of .ften files")
      ->required();
  decode->add_option("--max-len", decode_args.max_len, "decode length cap (default 30)");

  TsneArgs tsne_args;
  auto* tsne_cmd = app.add_subcommand("tsne", "t-SNE map and separation report for features");
  tsne_cmd->add_option("--features", tsne_args.features, "label=FILE (repeatable)")
      ->required()
      ->expected(-1);
  tsne_cmd->add_option("--perplexity", tsne_args.perplexity, "target perplexity (default 30)");
  tsne_cmd->add_option("--iters", tsne_args.iters, "iterations (default 1000)");
  tsne_cmd->add_option("--seed", tsne_args.seed, "RNG seed");
  tsne_cmd->add_option("--k", tsne_args.k, "neighbors for the purity report (default 10)");
  tsne_cmd->add_option("--out", tsne_args.out, "coordinates CSV")->required();
  tsne_cmd->add_option("--svg", tsne_args.svg, "optional scatter plot");

  CleanseArgs stats_args;
  auto* cleanse_stats = app.add_subcommand("cleanse-stats", "Error rate and class breakdown");
  cleanse_stats->add_option("--corpus", stats_args.corpus, "caption corpus JSONL")->required();
  cleanse_stats->add_option("--annotations", stats_args.annotations, "annotation JSONL")
      ->required();

  CleanseArgs apply_args;
  auto* cleanse_apply = app.add_subcommand("cleanse-apply", "Apply verified corrections");
  cleanse_apply->add_option("--corpus", apply_args.corpus, "caption corpus JSONL")->required();
  cleanse_apply->add_option("--annotations", apply_args.annotations, "annotation JSONL")
      ->required();
  cleanse_apply->add_option("--out", apply_args.out, "corrected corpus JSONL")->required();

  CleanseArgs perf_args;
  auto* human_perf = app.add_subcommand("human-perf", "Leave-one-caption-out human estimate");
  human_perf->add_option("--corpus", perf_args.corpus, "caption corpus JSONL")->required();
  human_perf->add_option("--rounds", perf_args.rounds, "rounds (default 23)");
  human_perf->add_option("--split", perf_args.split, "restrict to this split (default: all)");
  human_perf->add_option("--synonyms", perf_args.synonyms, "synonym file for METEOR");
  human_perf->add_flag("--smooth-bleu", perf_args.smooth_bleu, "BLEU smoothing");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;  // --help/--version exit 0, usage errors exit 2
  }

  try {
    if (score->parsed()) return run_score(score_args);
    if (augment->parsed()) return run_augment(augment_args);
    if (fx->parsed()) return run_features_extract(fx_args);
    if (train->parsed()) return run_train(train_args);
    if (decode->parsed()) return run_decode(decode_args);
    if (tsne_cmd->parsed()) return run_tsne(tsne_args);
    if (cleanse_stats->parsed()) return run_cleanse_stats(stats_args);
    if (cleanse_apply->parsed()) return run_cleanse_apply(apply_args);
    if (human_perf->parsed()) return run_human_perf(perf_args);
  } catch (const capkit::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    for (const auto& v : e.violations()) std::cerr << "  " << v << "\n";
    return 1;
  } catch (const capkit::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
