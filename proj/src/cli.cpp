#include "deepsent/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "deepsent/analysis.hpp"
#include "deepsent/errors.hpp"
#include "deepsent/gradcheck.hpp"
#include "deepsent/io.hpp"
#include "deepsent/model.hpp"
#include "deepsent/plots.hpp"

namespace deepsent {

namespace fs = std::filesystem;

namespace {

struct RunConfig {
  std::string config_path;
  std::uint64_t seed = 0;
  std::string out = "out";
  std::string mode = "multimodal";

  std::string posts, embeddings, features, image_root, dataset, checkpoint, items, ratings;

  Index max_len = kDefaultMaxLen;
  double min_english = 0.5;
  Index image_size = kDefaultImageSize;

  Index hidden = 64;
  Index fusion = 128;
  std::string encoder = "auto";
  std::vector<Index> channels = {8, 16, 32};
  bool trainable_backbone = false;

  std::string optimizer = "adam";
  double lr = 1e-3;
  Index batch_size = 32;
  int epochs = 10;
  double test_fraction = 0.2;
  bool no_shuffle = false;
  bool wall_clock = false;

  std::size_t n_words = 1000;
  std::size_t k = 10;
  Index components = 3;
  std::string linkage = "average";
  bool standardize = false;

  double eps = 1e-6;
  std::string corrupt;
  double corrupt_scale = 1.0;

  fs::path out_dir() const { return out; }
  fs::path dataset_path() const { return dataset.empty() ? out_dir() / "dataset.dsd" : fs::path(dataset); }
  fs::path checkpoint_path() const { return checkpoint.empty() ? out_dir() / "model.ckpt" : fs::path(checkpoint); }
};

// Default exit code for errors without a more specific mapping.
enum class Family { ingest, train, analysis, gradcheck };

int family_code(Family f) {
  switch (f) {
    case Family::ingest: return kExitIo;
    case Family::train: return kExitTraining;
    case Family::analysis: return kExitAnalysis;
    case Family::gradcheck: return kExitGradcheck;
  }
  return kExitAnalysis;
}

int guarded(Family family, const std::function<void()>& body) {
  try {
    body();
    return kExitOk;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    return kExitCheckpoint;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kExitIo;
  } catch (const ParseError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kExitIo;
  } catch (const TrainingError& e) {
    std::cerr << "training error: " << e.what() << "\n";
    return kExitTraining;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return family_code(family);
  }
}

void require_input(const std::string& value, const std::string& flag) {
  if (value.empty()) throw ConfigError("missing required input " + flag);
  if (!fs::exists(value)) throw ConfigError(flag + " path '" + value + "' does not exist");
}

void require_checkpoint(const fs::path& path) {
  if (!fs::exists(path)) throw CheckpointError("checkpoint '" + path.string() + "' not found");
}

void require_dataset(const fs::path& path) {
  if (!fs::exists(path)) throw ConfigError("dataset '" + path.string() + "' does not exist (run ingest first)");
}

Dataset load_dataset(const fs::path& path) { return parse_dataset(read_file(path)); }

void print_warnings(const std::vector<std::string>& warnings, const std::string& source) {
  for (const auto& w : warnings) std::cerr << "warning: " << source << ": " << w << "\n";
}

ImageSource image_source(const RunConfig& cfg, FeatureStore& store) {
  ImageSource source;
  if (!cfg.features.empty()) {
    store = load_feature_file(cfg.features);
    print_warnings(store.warnings(), cfg.features);
    source.kind = ImageKind::features;
    source.features = &store;
  } else if (!cfg.image_root.empty()) {
    source.kind = ImageKind::pixels;
    source.image_root = cfg.image_root;
    source.image_size = cfg.image_size;
  } else {
    throw ConfigError("an image source is required: --features or --image-root");
  }
  return source;
}

void check_image_inputs(const RunConfig& cfg) {
  if (!cfg.features.empty()) {
    require_input(cfg.features, "--features");
  } else if (!cfg.image_root.empty()) {
    require_input(cfg.image_root, "--image-root");
  } else {
    throw ConfigError("an image source is required: --features or --image-root");
  }
}

// ---------------------------------------------------------------------------

void cmd_ingest(const RunConfig& cfg) {
  require_input(cfg.posts, "--posts");
  require_input(cfg.embeddings, "--embeddings");
  check_image_inputs(cfg);
  if (cfg.max_len < 1) throw ConfigError("--max-len must be positive");

  const EmbeddingTable table = load_embedding_file(cfg.embeddings);
  print_warnings(table.warnings(), cfg.embeddings);
  FeatureStore store;
  FilterOptions options;
  options.max_len = cfg.max_len;
  options.min_english_fraction = cfg.min_english;
  options.images = image_source(cfg, store);

  const IngestResult ingested = ingest_file(cfg.posts);
  for (const auto& issue : ingested.errors) {
    std::cerr << "warning: " << cfg.posts << ":" << issue.line << ": " << issue.message << "\n";
  }
  FilterResult filtered = filter_dataset(ingested.posts, table, options);
  const FilterReport& r = filtered.report;

  Dataset ds;
  ds.max_len = cfg.max_len;
  ds.embed_dim = table.dim();
  ds.examples = std::move(filtered.examples);

  OutputSet outputs(cfg.out_dir());
  outputs.add("dataset.dsd", serialize_dataset(ds));
  outputs.add("filter_report.json", r.to_json());
  outputs.commit();

  std::cout << "stage,count\n"
            << "posts," << r.total << "\n"
            << "rejected_no_emotion," << r.no_emotion << "\n"
            << "rejected_multiple_emotions," << r.multiple_emotions << "\n"
            << "dropped_non_english," << r.non_english << "\n"
            << "dropped_no_image," << r.no_image << "\n"
            << "retained," << r.retained << "\n\n"
            << "emotion,posts,text_filtered,text_image_filtered\n";
  for (int e = 0; e < kNumEmotions; ++e) {
    const auto i = static_cast<std::size_t>(e);
    std::cout << emotion_name(emotion_at(e)) << "," << r.labeled[i] << "," << r.text_filtered[i] << ","
              << r.image_filtered[i] << "\n";
  }
}

ImageEncoderConfig image_config_for(const RunConfig& cfg, const Dataset& ds) {
  ImageEncoderConfig image;
  image.channels = cfg.channels;
  image.trainable_backbone = cfg.trainable_backbone;
  if (ds.examples.empty()) throw ConfigError("dataset has no examples");
  const ImageInput& first = ds.examples.front().image;
  const ImageKind kind = kind_of(first);
  if (cfg.encoder == "auto") {
    image.kind = kind == ImageKind::pixels ? ImageEncoderKind::tiny_cnn : ImageEncoderKind::frozen_features;
  } else {
    image.kind = parse_image_encoder_kind(cfg.encoder);
  }
  if (image.input_kind() != kind) {
    throw ConfigError("encoder " + to_string(image.kind) + " needs " + to_string(image.input_kind()) +
                      " images but the dataset holds " + to_string(kind));
  }
  if (kind == ImageKind::pixels) {
    image.image_size = std::get<Tensor>(first).shape.at(0);
  } else {
    image.feature_dim = std::get<Vector>(first).size();
  }
  return image;
}

struct SplitSets {
  std::vector<LabeledExample> train;
  std::vector<LabeledExample> test;
};

SplitSets split_for(const RunConfig& cfg, const std::vector<LabeledExample>& examples) {
  if (!(cfg.test_fraction >= 0.0 && cfg.test_fraction < 1.0)) {
    throw ConfigError("--test-fraction must lie in [0, 1)");
  }
  if (cfg.test_fraction == 0.0) return {examples, {}};
  Split s = split(examples, cfg.test_fraction, cfg.seed);
  print_warnings(s.warnings, "split");
  return {std::move(s.train), std::move(s.test)};
}

void cmd_train(const RunConfig& cfg) {
  const fs::path dataset_path = cfg.dataset_path();
  require_dataset(dataset_path);
  const Dataset ds = load_dataset(dataset_path);

  ModelConfig mc;
  mc.mode = parse_model_mode(cfg.mode);
  mc.embed_dim = ds.embed_dim;
  mc.hidden_dim = cfg.hidden;
  mc.fusion_dim = cfg.fusion;
  mc.max_len = ds.max_len;
  mc.image = image_config_for(cfg, ds);
  mc.seed = cfg.seed;
  mc.validate();

  TrainConfig tc;
  tc.optimizer = parse_optimizer_kind(cfg.optimizer);
  tc.learning_rate = cfg.lr;
  tc.batch_size = cfg.batch_size;
  tc.epochs = cfg.epochs;
  tc.seed = cfg.seed;
  tc.shuffle = !cfg.no_shuffle;
  tc.record_time = cfg.wall_clock;
  tc.validate();

  const SplitSets sets = split_for(cfg, ds.examples);
  if (sets.train.empty()) throw TrainingError("training split is empty");
  const double baseline = prior_baseline_accuracy(class_priors(std::span<const LabeledExample>(sets.train)));

  DeepSentimentModel model(mc);
  const TrainResult result = train(model, sets.train, tc, sets.test, [](const EpochMetrics& m) {
    std::cerr << "epoch " << m.epoch << " " << to_string(m.split) << " loss " << format_fixed(m.loss, 6)
              << " accuracy " << format_fixed(m.accuracy, 4) << "\n";
  });

  OutputSet outputs(cfg.out_dir());
  outputs.add("model.ckpt", serialize_checkpoint(model));
  outputs.add("metrics.csv", metrics_csv(result.metrics));
  outputs.commit();

  std::cout << "mode," << to_string(mc.mode) << "\n"
            << "prior_baseline_accuracy," << format_double(baseline) << "\n";
  for (const auto& m : result.metrics) {
    if (m.epoch != tc.epochs) continue;
    std::cout << "final_" << to_string(m.split) << "_loss," << format_double(m.loss) << "\n"
              << "final_" << to_string(m.split) << "_accuracy," << format_double(m.accuracy) << "\n";
  }
}

struct Loaded {
  DeepSentimentModel model;
  Dataset dataset;
};

Loaded load_model_and_dataset(const RunConfig& cfg) {
  const fs::path ckpt = cfg.checkpoint_path();
  require_checkpoint(ckpt);
  const fs::path dataset_path = cfg.dataset_path();
  require_dataset(dataset_path);
  DeepSentimentModel model = load_checkpoint(ckpt);
  Dataset ds = load_dataset(dataset_path);
  if (ds.embed_dim != model.config().embed_dim || ds.max_len != model.config().max_len) {
    throw DomainError("dataset (embed_dim " + std::to_string(ds.embed_dim) + ", max_len " +
                      std::to_string(ds.max_len) + ") does not match the checkpoint");
  }
  if (ds.examples.empty()) throw DomainError("dataset has no examples");
  return {std::move(model), std::move(ds)};
}

void cmd_eval(const RunConfig& cfg) {
  const Loaded loaded = load_model_and_dataset(cfg);
  const SplitSets sets = split_for(cfg, loaded.dataset.examples);
  std::string csv = "split,loss,accuracy,examples\n";
  auto row = [&](const std::vector<LabeledExample>& set, SplitTag tag) {
    if (set.empty()) return;
    const EpochMetrics m = evaluate(loaded.model, set, tag);
    csv += to_string(tag) + "," + format_double(m.loss) + "," + format_double(m.accuracy) + "," +
           std::to_string(set.size()) + "\n";
  };
  row(sets.train, SplitTag::train);
  row(sets.test, SplitTag::test);
  OutputSet outputs(cfg.out_dir());
  outputs.add("eval.csv", csv);
  outputs.commit();
  std::cout << csv;
}

std::vector<std::string> emotion_labels() {
  std::vector<std::string> labels;
  for (auto name : emotion_names()) labels.emplace_back(name);
  return labels;
}

void cmd_probe(const RunConfig& cfg) {
  require_input(cfg.embeddings, "--embeddings");
  const Loaded loaded = load_model_and_dataset(cfg);
  const EmbeddingTable table = load_embedding_file(cfg.embeddings);
  if (table.dim() != loaded.model.config().embed_dim) {
    throw DomainError("embedding dimension " + std::to_string(table.dim()) + " does not match the checkpoint");
  }
  std::vector<TokenSequence> corpus;
  for (const auto& ex : loaded.dataset.examples) corpus.push_back(ex.tokens);
  const std::vector<WordCount> ranking = word_frequencies(corpus);
  const ImageInput mean = mean_image(loaded.dataset.examples);
  const TopWords top = top_words(loaded.model, table, mean, ranking, cfg.n_words, cfg.k);

  OutputSet outputs(cfg.out_dir());
  outputs.add("topwords.json", top.to_json());
  outputs.commit();
  for (int e = 0; e < kNumEmotions; ++e) {
    std::cout << emotion_name(emotion_at(e)) << ":";
    for (const auto& w : top.per_emotion[static_cast<std::size_t>(e)]) std::cout << " " << w.word;
    std::cout << "\n";
  }
}

void cmd_cluster(const RunConfig& cfg) {
  const Linkage linkage = parse_linkage(cfg.linkage);
  const Loaded loaded = load_model_and_dataset(cfg);
  const Matrix posteriors = posterior_matrix(loaded.model, loaded.dataset.examples);
  const CorrelationResult corr = correlation_matrix(posteriors);
  print_warnings(corr.warnings, "correlation");
  const Dendrogram tree = hierarchical_cluster(to_distance(corr.matrix), linkage);
  const auto labels = emotion_labels();

  OutputSet outputs(cfg.out_dir());
  outputs.add("corr.csv", correlation_csv(corr.matrix));
  outputs.add("dendrogram.json", tree.to_json(labels));
  outputs.add("dendrogram.svg", dendrogram_svg(tree, labels));
  outputs.commit();
  std::cout << "left,right,height,id,size\n";
  for (const auto& m : tree.merges) {
    std::cout << m.left << "," << m.right << "," << format_double(m.height) << "," << m.id << "," << m.size << "\n";
  }
}

std::vector<int> argmax_rows(const Matrix& posteriors) {
  std::vector<int> out;
  for (Index i = 0; i < posteriors.rows(); ++i) out.push_back(static_cast<int>(argmax(Vector(posteriors.row(i).transpose()))));
  return out;
}

void cmd_pca(const RunConfig& cfg) {
  const Loaded loaded = load_model_and_dataset(cfg);
  const Matrix posteriors = posterior_matrix(loaded.model, loaded.dataset.examples);
  const PcaResult fit = pca(posteriors, cfg.components, cfg.standardize);
  std::vector<std::string> ids;
  for (const auto& ex : loaded.dataset.examples) ids.push_back(ex.id);

  OutputSet outputs(cfg.out_dir());
  outputs.add("pca.csv", pca_csv(fit));
  outputs.add("scores.csv", scores_csv(fit.scores, ids));
  outputs.add("scree.svg", scree_svg(fit.explained_ratio));
  if (fit.components() >= 2) {
    outputs.add("pca_scatter.svg", pca_scatter_svg(fit, fit.scores, argmax_rows(posteriors), emotion_labels()));
  } else {
    std::cerr << "note: pca_scatter.svg needs at least two components; skipped\n";
  }
  outputs.commit();
  std::cout << "component,explained_ratio\n";
  for (Index c = 0; c < fit.explained_ratio.size(); ++c) {
    std::cout << "PC" << c + 1 << "," << format_double(fit.explained_ratio[c]) << "\n";
  }
}

std::vector<OasisItem> load_items(const RunConfig& cfg, const ImageSource& source) {
  std::ifstream in(cfg.items);
  if (!in) throw IoError("cannot open items file '" + cfg.items + "'");
  std::vector<OasisItem> items;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = cfg.items + ":" + std::to_string(line_no);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(where + ": " + e.what());
    }
    if (!j.is_object() || !j.contains("id") || !j["id"].is_string() || !j.contains("label") ||
        !j["label"].is_string()) {
      throw ParseError(where + ": items need string fields id and label");
    }
    Post post;
    post.id = j["id"].get<std::string>();
    post.text = j["label"].get<std::string>();
    if (j.contains("image_path") && j["image_path"].is_string()) post.image_path = j["image_path"].get<std::string>();
    if (j.contains("feature_id") && j["feature_id"].is_string()) post.feature_id = j["feature_id"].get<std::string>();
    std::optional<ImageInput> image = resolve_image(post, source);
    if (!image) throw DomainError("item '" + post.id + "' has no usable image");
    items.push_back({post.id, post.text, std::move(*image)});
  }
  return items;
}

void cmd_oasis(const RunConfig& cfg) {
  require_input(cfg.embeddings, "--embeddings");
  require_input(cfg.items, "--items");
  require_input(cfg.ratings, "--ratings");
  check_image_inputs(cfg);
  const Loaded loaded = load_model_and_dataset(cfg);
  const EmbeddingTable table = load_embedding_file(cfg.embeddings);
  if (table.dim() != loaded.model.config().embed_dim) {
    throw DomainError("embedding dimension " + std::to_string(table.dim()) + " does not match the checkpoint");
  }
  FeatureStore store;
  ImageSource source = image_source(cfg, store);
  if (kind_of(loaded.dataset.examples.front().image) == ImageKind::pixels) {
    source.image_size = loaded.model.config().image.image_size;
  }
  const std::vector<OasisItem> items = load_items(cfg, source);
  const ScaleRatings ratings = load_ratings_csv(cfg.ratings);

  std::vector<Rating> aligned;
  std::vector<std::string> ids;
  for (const auto& item : items) {
    const Rating* r = ratings.find(item.id);
    if (!r) throw DomainError("no rating for item '" + item.id + "'");
    aligned.push_back(*r);
    ids.push_back(item.id);
  }

  const Matrix posteriors = posterior_matrix(loaded.model, loaded.dataset.examples);
  const PcaResult fit = pca(posteriors, cfg.components, cfg.standardize);
  const OasisResult result = oasis_protocol(loaded.model, table, items, fit);
  for (const auto& id : result.oov_items) std::cerr << "warning: item '" << id << "' label is out of vocabulary\n";
  const auto table_rows = scale_correlations(result.scores, aligned);
  for (std::size_t c = 0; c < table_rows.size(); ++c) {
    if (!table_rows[c].valence || !table_rows[c].arousal) {
      std::cerr << "warning: PC" << c + 1 << " correlation undefined (zero variance)\n";
    }
  }
  const std::string csv = scale_correlations_csv(table_rows);

  OutputSet outputs(cfg.out_dir());
  outputs.add("oasis_scores.csv", scores_csv(result.scores, ids));
  outputs.add("scale_corr.csv", csv);
  outputs.commit();
  std::cout << csv;
}

void cmd_gradcheck(const RunConfig& cfg) {
  GradcheckOptions options;
  options.seed = cfg.seed;
  options.eps = cfg.eps;
  options.corrupt_component = cfg.corrupt;
  options.corrupt_scale = cfg.corrupt_scale;
  const GradcheckReport report = run_gradcheck(options);
  std::cout << "component,max_rel_error,worst_parameter,status\n";
  for (const auto& row : report.rows) {
    std::cout << row.component << "," << format_double(row.result.max_rel_error) << ","
              << row.result.worst_parameter << ","
              << (row.result.max_rel_error < kGradcheckTolerance ? "ok" : "FAIL") << "\n";
  }
  if (!report.passed()) {
    const GradcheckRow& worst = report.worst();
    throw CheckError("gradient check failed: " + worst.result.worst_parameter + " in " + worst.component +
                     " has relative error " + format_double(worst.result.max_rel_error));
  }
}

// ---------------------------------------------------------------------------

void add_common(CLI::App* sub, RunConfig& cfg) {
  sub->add_option("--config", cfg.config_path, "Flat key=value config file; flags override it");
  sub->add_option("--seed", cfg.seed, "Seed for initialization, shuffling and splitting");
  sub->add_option("--out", cfg.out, "Output directory")->capture_default_str();
  sub->add_option("--mode", cfg.mode, "multimodal | text_only | image_only")->capture_default_str();
}

void add_images(CLI::App* sub, RunConfig& cfg) {
  sub->add_option("--features", cfg.features, "Backbone feature file (<id> <f1> ... <fD>)");
  sub->add_option("--image-root", cfg.image_root, "Base directory for PPM image paths");
  sub->add_option("--image-size", cfg.image_size, "Square size images are resized to")->capture_default_str();
}

void add_model_inputs(CLI::App* sub, RunConfig& cfg) {
  sub->add_option("--dataset", cfg.dataset, "Encoded dataset (default <out>/dataset.dsd)");
  sub->add_option("--checkpoint", cfg.checkpoint, "Model checkpoint (default <out>/model.ckpt)");
}

void add_split(CLI::App* sub, RunConfig& cfg) {
  sub->add_option("--test-fraction", cfg.test_fraction, "Held-out fraction, stratified")->capture_default_str();
}

struct Cli {
  CLI::App app{"Multimodal emotion classifier: ingest, train and analyze."};
  RunConfig cfg;
  std::vector<std::pair<CLI::App*, std::function<int()>>> commands;

  Cli() {
    app.require_subcommand(1);
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    RunConfig& c = cfg;

    auto* ingest = app.add_subcommand("ingest", "Label, filter and encode posts");
    add_common(ingest, c);
    ingest->add_option("--posts", c.posts, "Posts JSONL");
    ingest->add_option("--embeddings", c.embeddings, "Word embedding text file");
    add_images(ingest, c);
    ingest->add_option("--max-len", c.max_len, "Tokens kept per post")->capture_default_str();
    ingest->add_option("--min-english", c.min_english, "Minimum in-vocabulary token fraction")->capture_default_str();
    commands.emplace_back(ingest, [&c] { return guarded(Family::ingest, [&c] { cmd_ingest(c); }); });

    auto* train_cmd = app.add_subcommand("train", "Train a model on an ingested dataset");
    add_common(train_cmd, c);
    train_cmd->add_option("--dataset", c.dataset, "Encoded dataset (default <out>/dataset.dsd)");
    train_cmd->add_option("--hidden", c.hidden, "LSTM hidden size")->capture_default_str();
    train_cmd->add_option("--fusion", c.fusion, "Fusion layer width")->capture_default_str();
    train_cmd->add_option("--encoder", c.encoder, "auto | tiny_cnn | frozen_features")->capture_default_str();
    train_cmd->add_option("--channels", c.channels, "tiny_cnn channel counts")->delimiter(',');
    train_cmd->add_flag("--trainable-backbone", c.trainable_backbone, "Train the backbone (top block)");
    train_cmd->add_option("--optimizer", c.optimizer, "adam | sgd")->capture_default_str();
    train_cmd->add_option("--lr", c.lr, "Learning rate")->capture_default_str();
    train_cmd->add_option("--batch-size", c.batch_size, "Mini-batch size")->capture_default_str();
    train_cmd->add_option("--epochs", c.epochs, "Training epochs")->capture_default_str();
    add_split(train_cmd, c);
    train_cmd->add_flag("--no-shuffle", c.no_shuffle, "Keep the training order fixed");
    train_cmd->add_flag("--wall-clock", c.wall_clock, "Record epoch seconds in metrics.csv");
    commands.emplace_back(train_cmd, [&c] { return guarded(Family::train, [&c] { cmd_train(c); }); });

    auto* eval = app.add_subcommand("eval", "Loss and accuracy of a checkpoint");
    add_common(eval, c);
    add_model_inputs(eval, c);
    add_split(eval, c);
    commands.emplace_back(eval, [&c] { return guarded(Family::analysis, [&c] { cmd_eval(c); }); });

    auto* probe = app.add_subcommand("probe", "Top words per emotion from one-word posts");
    add_common(probe, c);
    add_model_inputs(probe, c);
    probe->add_option("--embeddings", c.embeddings, "Word embedding text file");
    probe->add_option("--n-words", c.n_words, "Most frequent words to score")->capture_default_str();
    probe->add_option("--k", c.k, "Words kept per emotion")->capture_default_str();
    commands.emplace_back(probe, [&c] { return guarded(Family::analysis, [&c] { cmd_probe(c); }); });

    auto* cluster = app.add_subcommand("cluster", "Posterior correlations and dendrogram");
    add_common(cluster, c);
    add_model_inputs(cluster, c);
    cluster->add_option("--linkage", c.linkage, "Linkage rule")->capture_default_str();
    commands.emplace_back(cluster, [&c] { return guarded(Family::analysis, [&c] { cmd_cluster(c); }); });

    auto* pca_cmd = app.add_subcommand("pca", "Principal components of the posteriors");
    add_common(pca_cmd, c);
    add_model_inputs(pca_cmd, c);
    pca_cmd->add_option("--components", c.components, "Components kept")->capture_default_str();
    pca_cmd->add_flag("--standardize", c.standardize, "Scale columns to unit variance first");
    commands.emplace_back(pca_cmd, [&c] { return guarded(Family::analysis, [&c] { cmd_pca(c); }); });

    auto* oasis = app.add_subcommand("oasis", "Correlate component scores with valence/arousal ratings");
    add_common(oasis, c);
    add_model_inputs(oasis, c);
    oasis->add_option("--embeddings", c.embeddings, "Word embedding text file");
    oasis->add_option("--items", c.items, "Items JSONL {id, label, image_path | feature_id}");
    oasis->add_option("--ratings", c.ratings, "Ratings CSV item_id,valence,arousal");
    add_images(oasis, c);
    oasis->add_option("--components", c.components, "Components kept")->capture_default_str();
    oasis->add_flag("--standardize", c.standardize, "Scale columns to unit variance first");
    commands.emplace_back(oasis, [&c] { return guarded(Family::analysis, [&c] { cmd_oasis(c); }); });

    auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of every backward pass");
    add_common(gradcheck, c);
    gradcheck->add_option("--eps", c.eps, "Central-difference step")->capture_default_str();
    gradcheck->add_option("--corrupt", c.corrupt)->group("");  // test hook
    gradcheck->add_option("--corrupt-scale", c.corrupt_scale)->group("");
    commands.emplace_back(gradcheck, [&c] { return guarded(Family::gradcheck, [&c] { cmd_gradcheck(c); }); });
  }

  CLI::App* find_command(const std::string& name) {
    for (auto& [sub, fn] : commands) {
      if (sub->get_name() == name) return sub;
    }
    return nullptr;
  }

  bool known_anywhere(const std::string& flag) {
    return std::any_of(commands.begin(), commands.end(),
                       [&](const auto& entry) { return entry.first->get_option_no_throw(flag) != nullptr; });
  }

  // Inserts config-file values right after the subcommand name so that
  // later command-line flags win.
  std::vector<std::string> expand_config(const std::vector<std::string>& args) {
    if (args.empty()) return args;
    CLI::App* sub = find_command(args[0]);
    if (!sub) return args;
    std::string path;
    for (std::size_t i = 1; i < args.size(); ++i) {
      if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
      if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
    }
    if (path.empty()) return args;
    if (!fs::exists(path)) throw ConfigError("config file '" + path + "' does not exist");
    std::vector<std::string> out = {args[0]};
    for (const auto& [key, value] : parse_flat_config(read_file(path))) {
      const std::string flag = "--" + key;
      if (key == "config") continue;
      if (!known_anywhere(flag)) throw ConfigError("unknown config key '" + key + "'");
      if (sub->get_option_no_throw(flag) == nullptr) continue;  // belongs to another command
      out.push_back(flag + "=" + value);
    }
    out.insert(out.end(), args.begin() + 1, args.end());
    return out;
  }

  int run(const std::vector<std::string>& args) {
    std::vector<std::string> expanded;
    try {
      expanded = expand_config(args);
    } catch (const Error& e) {
      std::cerr << "config error: " << e.what() << "\n";
      return kExitConfig;
    }
    std::vector<std::string> reversed(expanded.rbegin(), expanded.rend());
    try {
      app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
      return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
      return app.exit(e);
    } catch (const CLI::ParseError& e) {
      app.exit(e);
      return kExitConfig;
    }
    for (auto& [sub, fn] : commands) {
      if (sub->parsed()) return fn();
    }
    return kExitConfig;
  }
};

std::string trim_copy(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

std::vector<std::pair<std::string, std::string>> parse_flat_config(const std::string& text) {
  std::vector<std::pair<std::string, std::string>> out;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim_copy(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    std::string key = trim_copy(std::string_view(t).substr(0, eq));
    std::string value = trim_copy(std::string_view(t).substr(eq + 1));
    if (key.empty()) throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
    std::replace(key.begin(), key.end(), '_', '-');
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    out.emplace_back(key, value);
  }
  return out;
}

int run_cli(const std::vector<std::string>& args) {
  Cli cli;
  return cli.run(args);
}

int run_cli(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_cli(args);
}

}  // namespace deepsent
