#include "deepsent/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <set>
#include <unordered_set>

#include <json.hpp>

#include "deepsent/io.hpp"
#include "deepsent/random.hpp"

namespace deepsent {

using nlohmann::json;

const std::array<std::string_view, kNumEmotions>& emotion_names() {
  static constexpr std::array<std::string_view, kNumEmotions> kNames = {
      "happy", "calm",     "sad",       "scared", "bored",   "angry",   "annoyed", "love",
      "excited", "surprised", "optimistic", "amazed", "ashamed", "disgusted", "pensive"};
  return kNames;
}

std::string_view emotion_name(Emotion e) { return emotion_names()[static_cast<std::size_t>(e)]; }

Emotion emotion_at(int index) {
  if (index < 0 || index >= kNumEmotions) {
    throw IndexError("emotion index " + std::to_string(index) + " out of range");
  }
  return static_cast<Emotion>(index);
}

std::optional<Emotion> parse_emotion(std::string_view word) {
  const std::string lower = lowercase(word);
  const auto& names = emotion_names();
  for (int i = 0; i < kNumEmotions; ++i) {
    if (names[static_cast<std::size_t>(i)] == lower) return static_cast<Emotion>(i);
  }
  return std::nullopt;
}

std::string_view to_string(RejectReason reason) {
  return reason == RejectReason::no_emotion ? "no-emotion" : "multiple-emotions";
}

// ---------------------------------------------------------------------------
// Ingestion

namespace {

std::optional<std::string> optional_string(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) throw ParseError(std::string("field '") + key + "' must be a string");
  return it->get<std::string>();
}

std::string required_string(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) throw ParseError(std::string("missing field '") + key + "'");
  if (!it->is_string()) throw ParseError(std::string("field '") + key + "' must be a string");
  return it->get<std::string>();
}

Post parse_post(const std::string& line) {
  json obj;
  try {
    obj = json::parse(line);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("invalid JSON: ") + e.what());
  }
  if (!obj.is_object()) throw ParseError("line is not a JSON object");

  Post post;
  post.id = required_string(obj, "id");
  post.text = required_string(obj, "text");
  auto tags = obj.find("tags");
  if (tags == obj.end()) throw ParseError("missing field 'tags'");
  if (!tags->is_array()) throw ParseError("field 'tags' must be an array");
  for (const auto& t : *tags) {
    if (!t.is_string()) throw ParseError("field 'tags' must contain only strings");
    post.tags.push_back(t.get<std::string>());
  }
  post.image_path = optional_string(obj, "image_path");
  post.feature_id = optional_string(obj, "feature_id");
  post.timestamp = optional_string(obj, "timestamp");
  return post;
}

}  // namespace

IngestResult ingest(std::istream& in) {
  if (!in) throw IoError("posts stream is not readable");
  IngestResult result;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      Post post = parse_post(line);
      if (!seen.insert(post.id).second) throw ParseError("duplicate id '" + post.id + "'");
      result.posts.push_back(std::move(post));
    } catch (const ParseError& e) {
      result.errors.push_back({line_no, e.what()});
    }
  }
  if (in.bad()) throw IoError("error while reading posts stream");
  return result;
}

IngestResult ingest_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open posts file '" + path.string() + "'");
  return ingest(in);
}

// ---------------------------------------------------------------------------
// Labelling and filtering

LabelResult assign_label(const Post& post) {
  std::set<int> found;
  for (const auto& tag : post.tags) {
    if (auto e = parse_emotion(tag)) found.insert(index_of(*e));
  }
  if (found.empty()) return Rejection{RejectReason::no_emotion, "no emotion tag"};
  if (found.size() > 1) {
    std::string detail = "emotion tags:";
    for (int i : found) detail += " " + std::string(emotion_name(static_cast<Emotion>(i)));
    return Rejection{RejectReason::multiple_emotions, detail};
  }
  return static_cast<Emotion>(*found.begin());
}

std::string remove_label_word(std::string_view text, Emotion label) {
  const std::string_view word = emotion_name(label);
  std::string out;
  std::size_t chunk_start = std::string_view::npos;
  auto flush_chunk = [&](std::size_t end) {
    const auto chunk = text.substr(chunk_start, end - chunk_start);
    std::string kept;
    std::size_t last = 0;
    for (const auto& span : word_spans(chunk)) {
      if (span.token == word) {
        kept.append(chunk.substr(last, span.begin - last));
        last = span.end;
      }
    }
    kept.append(chunk.substr(last));
    if (!kept.empty()) {
      if (!out.empty()) out.push_back(' ');
      out += kept;
    }
    chunk_start = std::string_view::npos;
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const bool space = text[i] == ' ' || text[i] == '\t' || text[i] == '\n' || text[i] == '\r';
    if (space) {
      if (chunk_start != std::string_view::npos) flush_chunk(i);
    } else if (chunk_start == std::string_view::npos) {
      chunk_start = i;
    }
  }
  if (chunk_start != std::string_view::npos) flush_chunk(text.size());
  return out;
}

std::optional<ImageInput> resolve_image(const Post& post, const ImageSource& source) {
  if (source.kind == ImageKind::features) {
    if (!post.feature_id || source.features == nullptr) return std::nullopt;
    const Vector* f = source.features->find(*post.feature_id);
    if (f == nullptr) return std::nullopt;
    return ImageInput{*f};
  }
  if (!post.image_path) return std::nullopt;
  std::filesystem::path path = *post.image_path;
  if (path.is_relative() && !source.image_root.empty()) path = source.image_root / path;
  try {
    Tensor pixels = load_ppm(path);
    return ImageInput{resize_bilinear(pixels, source.image_size, source.image_size)};
  } catch (const Error&) {
    return std::nullopt;
  }
}

std::string FilterReport::to_json() const {
  json j;
  j["total"] = total;
  j["rejected_no_emotion"] = no_emotion;
  j["rejected_multiple_emotions"] = multiple_emotions;
  j["dropped_non_english"] = non_english;
  j["dropped_no_image"] = no_image;
  j["retained"] = retained;
  json per = json::array();
  for (int i = 0; i < kNumEmotions; ++i) {
    const auto k = static_cast<std::size_t>(i);
    per.push_back({{"emotion", std::string(emotion_names()[k])},
                   {"posts", labeled[k]},
                   {"text_filtered", text_filtered[k]},
                   {"text_image_filtered", image_filtered[k]}});
  }
  j["per_emotion"] = per;
  return j.dump(2) + "\n";
}

FilterResult filter_dataset(const std::vector<Post>& posts, const EmbeddingTable& table,
                            const FilterOptions& options) {
  FilterResult result;
  auto& report = result.report;
  report.total = posts.size();
  for (const Post& post : posts) {
    const LabelResult decision = assign_label(post);
    if (const auto* rejection = std::get_if<Rejection>(&decision)) {
      ++(rejection->reason == RejectReason::no_emotion ? report.no_emotion : report.multiple_emotions);
      continue;
    }
    const Emotion label = std::get<Emotion>(decision);
    const auto k = static_cast<std::size_t>(index_of(label));
    ++report.labeled[k];

    TokenSequence tokens = tokenize(remove_label_word(post.text, label));
    if (english_fraction(tokens, table) < options.min_english_fraction) {
      ++report.non_english;
      continue;
    }
    ++report.text_filtered[k];

    auto image = resolve_image(post, options.images);
    if (!image) {
      ++report.no_image;
      continue;
    }
    ++report.image_filtered[k];

    LabeledExample ex{post.id, tokens, encode_text(tokens, table, options.max_len), std::move(*image), label};
    result.examples.push_back(std::move(ex));
  }
  report.retained = result.examples.size();
  return result;
}

// ---------------------------------------------------------------------------
// Priors, mean image, split

ClassPriors ClassPriors::from_counts(const std::array<double, kNumEmotions>& counts) {
  double total = 0;
  for (double c : counts) {
    if (!(c >= 0) || !std::isfinite(c)) throw DomainError("class counts must be finite and non-negative");
    total += c;
  }
  if (!(total > 0)) throw DomainError("class priors need at least one example");
  ClassPriors p;
  p.counts = counts;
  for (std::size_t i = 0; i < counts.size(); ++i) p.proportions[i] = counts[i] / total;
  return p;
}

ClassPriors class_priors(std::span<const Emotion> labels) {
  if (labels.empty()) throw DomainError("class_priors: empty input");
  std::array<double, kNumEmotions> counts{};
  for (Emotion e : labels) counts[static_cast<std::size_t>(index_of(e))] += 1.0;
  return ClassPriors::from_counts(counts);
}

ClassPriors class_priors(std::span<const LabeledExample> examples) {
  const auto labels = labels_of(examples);
  return class_priors(std::span<const Emotion>(labels));
}

double prior_baseline_accuracy(const ClassPriors& priors) {
  double s = 0;
  for (double p : priors.proportions) s += p * p;
  return s;
}

ImageInput mean_image(std::span<const LabeledExample> examples) {
  if (examples.empty()) throw DomainError("mean_image: no examples");
  const ImageKind kind = kind_of(examples.front().image);
  if (kind == ImageKind::pixels) {
    const Tensor& first = std::get<Tensor>(examples.front().image);
    Tensor sum(first.shape);
    for (const auto& ex : examples) {
      const auto* t = std::get_if<Tensor>(&ex.image);
      if (t == nullptr) throw DomainError("mean_image: dataset mixes pixel images and features");
      if (t->shape != first.shape) throw DimensionError("mean_image: image shapes differ");
      sum.data += t->data;
    }
    sum.data /= static_cast<double>(examples.size());
    return sum;
  }
  const Vector& first = std::get<Vector>(examples.front().image);
  Vector sum = Vector::Zero(first.size());
  for (const auto& ex : examples) {
    const auto* v = std::get_if<Vector>(&ex.image);
    if (v == nullptr) throw DomainError("mean_image: dataset mixes pixel images and features");
    if (v->size() != first.size()) throw DimensionError("mean_image: feature sizes differ");
    sum += *v;
  }
  sum /= static_cast<double>(examples.size());
  return sum;
}

SplitIndices split_indices(std::span<const Emotion> labels, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw DomainError("split: test_fraction must lie strictly between 0 and 1");
  }
  SplitIndices out;
  std::array<std::vector<std::size_t>, kNumEmotions> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    by_class[static_cast<std::size_t>(index_of(labels[i]))].push_back(i);
  }

  std::size_t eligible = 0;
  for (int c = 0; c < kNumEmotions; ++c) {
    const auto& members = by_class[static_cast<std::size_t>(c)];
    if (members.size() == 1) {
      out.warnings.push_back("class '" + std::string(emotion_name(static_cast<Emotion>(c))) +
                             "' has fewer than 2 examples; all go to train");
    } else if (members.size() >= 2) {
      eligible += members.size();
    }
  }

  // Per-class floors, then largest remainders until the overall target.
  std::array<std::size_t, kNumEmotions> n_test{};
  std::array<double, kNumEmotions> remainder{};
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    const std::size_t n = by_class[c].size();
    if (n < 2) continue;
    const double exact = static_cast<double>(n) * test_fraction;
    n_test[c] = static_cast<std::size_t>(std::floor(exact));
    remainder[c] = exact - static_cast<double>(n_test[c]);
    assigned += n_test[c];
  }
  const auto target = static_cast<std::size_t>(std::llround(static_cast<double>(eligible) * test_fraction));
  std::vector<std::size_t> order(kNumEmotions);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  for (std::size_t c : order) {
    if (assigned >= target) break;
    if (remainder[c] > 0.0 && n_test[c] + 1 < by_class[c].size()) {
      ++n_test[c];
      ++assigned;
    }
  }

  Rng rng(seed);
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto members = by_class[c];
    if (members.size() < 2) {
      out.train.insert(out.train.end(), members.begin(), members.end());
      continue;
    }
    shuffle(std::span<std::size_t>(members), rng);
    out.test.insert(out.test.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(n_test[c]));
    out.train.insert(out.train.end(), members.begin() + static_cast<std::ptrdiff_t>(n_test[c]), members.end());
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

Split split(std::span<const LabeledExample> examples, double test_fraction, std::uint64_t seed) {
  const auto labels = labels_of(examples);
  SplitIndices idx = split_indices(labels, test_fraction, seed);
  Split s;
  for (auto i : idx.train) s.train.push_back(examples[i]);
  for (auto i : idx.test) s.test.push_back(examples[i]);
  s.warnings = std::move(idx.warnings);
  return s;
}

std::vector<Emotion> labels_of(std::span<const LabeledExample> examples) {
  std::vector<Emotion> labels;
  labels.reserve(examples.size());
  for (const auto& ex : examples) labels.push_back(ex.label);
  return labels;
}

// ---------------------------------------------------------------------------
// Encoded dataset file

namespace {
constexpr std::string_view kDatasetMagic = "DSDS";
constexpr std::uint32_t kDatasetVersion = 1;
}  // namespace

std::string serialize_dataset(const Dataset& dataset) {
  BinaryWriter w;
  w.bytes(kDatasetMagic);
  w.u32(kDatasetVersion);
  w.i64(dataset.max_len);
  w.i64(dataset.embed_dim);
  w.u64(dataset.examples.size());
  for (const auto& ex : dataset.examples) {
    w.str(ex.id);
    w.u32(static_cast<std::uint32_t>(index_of(ex.label)));
    w.u64(ex.tokens.source_length);
    w.u32(static_cast<std::uint32_t>(ex.tokens.tokens.size()));
    for (const auto& t : ex.tokens.tokens) w.str(t);
    w.i64(ex.text.valid_length);
    w.matrix(ex.text.vectors);
    if (const auto* t = std::get_if<Tensor>(&ex.image)) {
      w.u8(0);
      w.u32(static_cast<std::uint32_t>(t->shape.size()));
      for (Index d : t->shape) w.i64(d);
      w.matrix(t->data);
    } else {
      w.u8(1);
      w.matrix(std::get<Vector>(ex.image));
    }
  }
  w.u64(fnv1a64(w.buffer()));
  return w.take();
}

Dataset parse_dataset(std::string_view bytes) {
  if (bytes.size() < 8) throw ParseError("dataset file is truncated");
  const std::string_view body = bytes.substr(0, bytes.size() - 8);
  BinaryReader tail(bytes.substr(bytes.size() - 8));
  if (tail.u64() != fnv1a64(body)) throw ParseError("dataset file checksum mismatch (corrupt or truncated)");

  BinaryReader r(body);
  if (r.bytes(4) != kDatasetMagic) throw ParseError("not a dataset file (bad magic)");
  if (const auto v = r.u32(); v != kDatasetVersion) {
    throw ParseError("unsupported dataset version " + std::to_string(v));
  }
  Dataset d;
  d.max_len = r.i64();
  d.embed_dim = r.i64();
  const auto n = r.u64();
  for (std::uint64_t i = 0; i < n; ++i) {
    LabeledExample ex;
    ex.id = r.str();
    ex.label = emotion_at(static_cast<int>(r.u32()));
    ex.tokens.source_length = r.u64();
    const auto nt = r.u32();
    for (std::uint32_t k = 0; k < nt; ++k) ex.tokens.tokens.push_back(r.str());
    ex.text.valid_length = r.i64();
    ex.text.vectors = r.matrix();
    const auto kind = r.u8();
    if (kind == 0) {
      Tensor t;
      const auto rank = r.u32();
      if (rank > 8) throw ParseError("dataset: implausible tensor rank");
      for (std::uint32_t k = 0; k < rank; ++k) t.shape.push_back(r.i64());
      t.data = r.matrix();
      ex.image = std::move(t);
    } else if (kind == 1) {
      ex.image = Vector(r.matrix());
    } else {
      throw ParseError("dataset: unknown image kind");
    }
    d.examples.push_back(std::move(ex));
  }
  if (!r.at_end()) throw ParseError("dataset: trailing bytes");
  return d;
}

}  // namespace deepsent
