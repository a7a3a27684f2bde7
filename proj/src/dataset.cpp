#include "jbshield/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "jbshield/prng.hpp"
#include "jbshield/text.hpp"

namespace jbshield {

using nlohmann::json;

namespace {

// substream tags for the per-label shuffle streams
constexpr std::uint64_t kSplitStreamBenign = 0x10;
constexpr std::uint64_t kSplitStreamJailbreak = 0x11;
constexpr std::uint64_t kFoldStreamBenign = 0x20;
constexpr std::uint64_t kFoldStreamJailbreak = 0x21;

std::string ascii_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

bool trimmed_empty(std::string_view s) {
  for (unsigned char c : s) {
    if (!std::isspace(c)) return false;
  }
  return true;
}

std::size_t round_half_up(double x) {
  return static_cast<std::size_t>(std::floor(x + 0.5));
}

[[noreturn]] void fail_row(const std::filesystem::path& path, std::size_t line,
                           const std::string& what) {
  throw std::runtime_error(path.string() + ": row " + std::to_string(line) +
                           ": " + what);
}

}  // namespace

const char* to_string(Label label) {
  return label == Label::Jailbreak ? "jailbreak" : "benign";
}

Label label_from_token(std::string_view token) {
  const std::string t = ascii_lower(token);
  if (t == "jailbreak" || t == "1" || t == "true") return Label::Jailbreak;
  if (t == "benign" || t == "0" || t == "false") return Label::Benign;
  throw std::invalid_argument("unknown label token \"" + std::string(token) +
                              "\"");
}

Corpus::Corpus(std::vector<PromptRecord> records) {
  records_.reserve(records.size());
  for (auto& r : records) add(std::move(r));
}

void Corpus::add(PromptRecord record) {
  if (record.id.empty()) {
    throw std::invalid_argument("record with empty id");
  }
  if (trimmed_empty(record.text)) {
    throw std::invalid_argument("record " + record.id +
                                ": text is empty after trimming");
  }
  if (!index_by_id_.emplace(record.id, records_.size()).second) {
    throw std::invalid_argument("duplicate record id \"" + record.id + "\"");
  }
  if (record.label == Label::Jailbreak) {
    ++counts_.jailbreak;
  } else {
    ++counts_.benign;
  }
  records_.push_back(std::move(record));
}

LabelCounts Corpus::tally() const {
  LabelCounts c;
  for (const auto& r : records_) {
    if (r.label == Label::Jailbreak) {
      ++c.jailbreak;
    } else {
      ++c.benign;
    }
  }
  return c;
}

namespace {

Corpus ingest_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());

  const std::string stem = path.stem().string();
  Corpus corpus;
  std::string line;
  std::size_t line_no = 0;
  std::size_t ordinal = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trimmed_empty(line)) continue;
    json row;
    try {
      row = json::parse(line);
    } catch (const json::exception& e) {
      fail_row(path, line_no, std::string("invalid JSON: ") + e.what());
    }
    if (!row.is_object()) fail_row(path, line_no, "row is not a JSON object");
    if (!row.contains("text") || !row["text"].is_string()) {
      fail_row(path, line_no, "missing string field \"text\"");
    }
    if (!row.contains("label")) fail_row(path, line_no, "missing field \"label\"");
    if (!row.contains("source") || !row["source"].is_string()) {
      fail_row(path, line_no, "missing string field \"source\"");
    }
    std::string token;
    const json& lab = row["label"];
    if (lab.is_string()) {
      token = lab.get<std::string>();
    } else if (lab.is_boolean()) {
      token = lab.get<bool>() ? "true" : "false";
    } else if (lab.is_number_integer()) {
      token = std::to_string(lab.get<long long>());
    } else {
      fail_row(path, line_no, "label must be a string, bool or integer");
    }

    ++ordinal;
    PromptRecord rec;
    rec.text = row["text"].get<std::string>();
    rec.source = row["source"].get<std::string>();
    if (row.contains("id")) {
      if (!row["id"].is_string()) fail_row(path, line_no, "id must be a string");
      rec.id = row["id"].get<std::string>();
    } else {
      rec.id = stem + ":" + std::to_string(ordinal);
    }
    try {
      rec.label = label_from_token(token);
      corpus.add(std::move(rec));
    } catch (const std::exception& e) {
      fail_row(path, line_no, e.what());
    }
  }
  if (corpus.empty()) {
    throw std::runtime_error(path.string() + ": no records");
  }
  return corpus;
}

// RFC-4180-ish CSV: quoted fields may contain commas, doubled quotes and
// newlines. Returns rows of cells plus the line each row started on.
std::vector<std::pair<std::size_t, std::vector<std::string>>> parse_csv(
    std::istream& in) {
  std::vector<std::pair<std::size_t, std::vector<std::string>>> rows;
  std::vector<std::string> cells;
  std::string cell;
  bool quoted = false;
  bool row_has_data = false;
  std::size_t line_no = 1;
  std::size_t row_start = 1;

  auto end_cell = [&] {
    cells.push_back(std::move(cell));
    cell.clear();
  };
  auto end_row = [&] {
    if (row_has_data || !cells.empty() || !cell.empty()) {
      end_cell();
      rows.emplace_back(row_start, std::move(cells));
      cells.clear();
    }
    row_has_data = false;
    row_start = line_no;
  };

  char c;
  while (in.get(c)) {
    if (quoted) {
      if (c == '"') {
        if (in.peek() == '"') {
          in.get(c);
          cell.push_back('"');
        } else {
          quoted = false;
        }
      } else {
        if (c == '\n') ++line_no;
        cell.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        quoted = true;
        row_has_data = true;
        break;
      case ',':
        end_cell();
        row_has_data = true;
        break;
      case '\r':
        break;
      case '\n':
        ++line_no;
        end_row();
        break;
      default:
        cell.push_back(c);
        row_has_data = true;
        break;
    }
  }
  if (quoted) throw std::runtime_error("unterminated quoted CSV field");
  end_row();
  return rows;
}

Corpus ingest_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());

  auto rows = parse_csv(in);
  if (rows.empty()) throw std::runtime_error(path.string() + ": empty file");

  const auto& header = rows.front().second;
  auto col = [&](std::string_view name) -> std::optional<std::size_t> {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (ascii_lower(header[i]) == name) return i;
    }
    return std::nullopt;
  };
  const auto text_col = col("text");
  const auto label_col = col("label");
  const auto source_col = col("source");
  const auto id_col = col("id");
  if (!text_col || !label_col || !source_col) {
    throw std::runtime_error(path.string() +
                             ": header must name columns text,label,source");
  }

  const std::string stem = path.stem().string();
  Corpus corpus;
  std::size_t ordinal = 0;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& [line_no, cells] = rows[r];
    if (cells.size() != header.size()) {
      fail_row(path, line_no,
               "expected " + std::to_string(header.size()) + " columns, got " +
                   std::to_string(cells.size()));
    }
    if (!is_valid_utf8(cells[*text_col])) {
      fail_row(path, line_no, "text is not valid UTF-8");
    }
    ++ordinal;
    PromptRecord rec;
    rec.text = cells[*text_col];
    rec.source = cells[*source_col];
    rec.id = (id_col && !cells[*id_col].empty())
                 ? cells[*id_col]
                 : stem + ":" + std::to_string(ordinal);
    try {
      rec.label = label_from_token(cells[*label_col]);
      corpus.add(std::move(rec));
    } catch (const std::exception& e) {
      fail_row(path, line_no, e.what());
    }
  }
  if (corpus.empty()) {
    throw std::runtime_error(path.string() + ": no records");
  }
  return corpus;
}

}  // namespace

Corpus ingest(const std::filesystem::path& path, IngestFormat format) {
  return format == IngestFormat::Jsonl ? ingest_jsonl(path) : ingest_csv(path);
}

Corpus ingest(const std::filesystem::path& path) {
  const std::string ext = ascii_lower(path.extension().string());
  if (ext == ".jsonl" || ext == ".ndjson") return ingest_jsonl(path);
  if (ext == ".csv") return ingest_csv(path);
  throw std::invalid_argument("cannot infer ingest format from \"" +
                              path.string() + "\" (expected .jsonl or .csv)");
}

Corpus merge(std::span<const Corpus> parts) {
  Corpus out;
  for (const Corpus& part : parts) {
    for (const PromptRecord& r : part.records()) out.add(r);
  }
  return out;
}

Corpus dedupe(const Corpus& corpus) {
  std::unordered_map<std::string, Label> seen;
  std::vector<std::string> conflicts;
  Corpus out;
  for (const PromptRecord& r : corpus.records()) {
    const std::string key = normalize_text(r.text);
    auto [it, inserted] = seen.emplace(key, r.label);
    if (inserted) {
      out.add(r);
    } else if (it->second != r.label) {
      conflicts.push_back(key);
    }
  }
  if (!conflicts.empty()) {
    std::ostringstream msg;
    msg << "duplicate texts with conflicting labels (" << conflicts.size()
        << "):";
    const std::size_t shown = std::min<std::size_t>(conflicts.size(), 5);
    for (std::size_t i = 0; i < shown; ++i) msg << " \"" << conflicts[i] << "\"";
    if (shown < conflicts.size()) msg << " ...";
    throw std::runtime_error(msg.str());
  }
  return out;
}

namespace {

// Per-label id lists, ordered then shuffled by a label-specific stream, so
// membership depends only on (seed, record ids).
std::vector<std::string> shuffled_class_ids(
    std::span<const std::pair<std::string, Label>> items, Label label,
    std::uint64_t seed, std::uint64_t stream) {
  std::vector<std::string> ids;
  for (const auto& [id, lab] : items) {
    if (lab == label) ids.push_back(id);
  }
  std::sort(ids.begin(), ids.end());
  SplitMix64 rng(derive_seed(seed, stream));
  rng.shuffle(ids);
  return ids;
}

}  // namespace

SplitResult stratified_split(const Corpus& corpus, const SplitSpec& spec) {
  if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0)) {
    throw std::invalid_argument("train_fraction must be in (0,1)");
  }
  if (corpus.counts().jailbreak == 0 || corpus.counts().benign == 0) {
    throw std::invalid_argument("stratified_split needs at least one record "
                                "of each label");
  }

  std::vector<std::pair<std::string, Label>> items;
  items.reserve(corpus.size());
  for (const auto& r : corpus.records()) items.emplace_back(r.id, r.label);

  std::unordered_set<std::string> train_ids;
  for (Label label : {Label::Benign, Label::Jailbreak}) {
    const std::uint64_t stream = label == Label::Jailbreak
                                     ? kSplitStreamJailbreak
                                     : kSplitStreamBenign;
    auto ids = shuffled_class_ids(items, label, spec.seed, stream);
    const std::size_t n_train =
        round_half_up(spec.train_fraction * static_cast<double>(ids.size()));
    for (std::size_t i = 0; i < n_train && i < ids.size(); ++i) {
      train_ids.insert(ids[i]);
    }
  }

  SplitResult result;
  for (const auto& r : corpus.records()) {
    if (train_ids.contains(r.id)) {
      result.train.add(r);
    } else {
      result.validation.add(r);
    }
  }
  return result;
}

FoldAssignment make_folds(std::span<const std::pair<std::string, Label>> items,
                          int k, std::uint64_t seed) {
  if (k < 2) throw std::invalid_argument("fold count must be at least 2");
  LabelCounts counts;
  for (const auto& [id, label] : items) {
    if (label == Label::Jailbreak) {
      ++counts.jailbreak;
    } else {
      ++counts.benign;
    }
  }
  for (Label label : {Label::Benign, Label::Jailbreak}) {
    if (counts.of(label) < static_cast<std::size_t>(k)) {
      throw std::invalid_argument(std::string("class \"") + to_string(label) +
                                  "\" has " + std::to_string(counts.of(label)) +
                                  " records, fewer than k=" + std::to_string(k));
    }
  }

  FoldAssignment folds;
  folds.k = k;
  for (Label label : {Label::Benign, Label::Jailbreak}) {
    const std::uint64_t stream =
        label == Label::Jailbreak ? kFoldStreamJailbreak : kFoldStreamBenign;
    auto ids = shuffled_class_ids(items, label, seed, stream);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (!folds.fold_of.emplace(std::move(ids[i]), static_cast<int>(i % k))
               .second) {
        throw std::invalid_argument("duplicate record id in fold input");
      }
    }
  }
  return folds;
}

FoldAssignment make_folds(const Corpus& corpus, int k, std::uint64_t seed) {
  std::vector<std::pair<std::string, Label>> items;
  items.reserve(corpus.size());
  for (const auto& r : corpus.records()) items.emplace_back(r.id, r.label);
  return make_folds(items, k, seed);
}

std::uint64_t corpus_hash(const Corpus& corpus) {
  std::string buf;
  for (const auto& r : corpus.records()) {
    buf += normalize_text(r.text);
    buf += '\x1f';
    buf += (r.label == Label::Jailbreak ? 'J' : 'B');
    buf += '\x1e';
  }
  return fnv1a64(buf);
}

void save_corpus_artifact(const std::filesystem::path& path,
                          const CorpusArtifact& artifact) {
  json doc;
  doc["format"] = "jbshield-corpus";
  doc["version"] = 1;
  doc["counts"] = {{"jailbreak", artifact.all.counts().jailbreak},
                   {"benign", artifact.all.counts().benign}};
  doc["hash"] = hex64(corpus_hash(artifact.all));

  std::unordered_map<std::string, const char*> split_of;
  if (artifact.split) {
    doc["split"] = {{"train_fraction", artifact.train_fraction},
                    {"seed", artifact.split_seed}};
    for (const auto& r : artifact.split->train.records()) {
      split_of.emplace(r.id, "train");
    }
    for (const auto& r : artifact.split->validation.records()) {
      split_of.emplace(r.id, "validation");
    }
  }

  json records = json::array();
  for (const auto& r : artifact.all.records()) {
    json row = {{"id", r.id},
                {"text", r.text},
                {"label", to_string(r.label)},
                {"source", r.source}};
    if (auto it = split_of.find(r.id); it != split_of.end()) {
      row["split"] = it->second;
    }
    records.push_back(std::move(row));
  }
  doc["records"] = std::move(records);

  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << doc.dump(2) << "\n";
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

CorpusArtifact load_corpus_artifact(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw std::runtime_error(path.string() + ": invalid JSON: " + e.what());
  }
  if (doc.value("format", "") != "jbshield-corpus") {
    throw std::runtime_error(path.string() + ": not a jbshield-corpus file");
  }
  if (doc.value("version", 0) != 1) {
    throw std::runtime_error(path.string() + ": unsupported corpus version");
  }

  CorpusArtifact artifact;
  const bool has_split = doc.contains("split");
  if (has_split) {
    artifact.split.emplace();
    artifact.train_fraction = doc["split"].value("train_fraction", 0.0);
    artifact.split_seed = doc["split"].value("seed", std::uint64_t{0});
  }
  for (const auto& row : doc.at("records")) {
    PromptRecord rec;
    rec.id = row.at("id").get<std::string>();
    rec.text = row.at("text").get<std::string>();
    rec.label = label_from_token(row.at("label").get<std::string>());
    rec.source = row.value("source", "");
    if (has_split) {
      const std::string part = row.value("split", "");
      if (part == "train") {
        artifact.split->train.add(rec);
      } else if (part == "validation") {
        artifact.split->validation.add(rec);
      } else {
        throw std::runtime_error(path.string() + ": record " + rec.id +
                                 " lacks a split assignment");
      }
    }
    artifact.all.add(std::move(rec));
  }
  if (artifact.all.empty()) {
    throw std::runtime_error(path.string() + ": no records");
  }

  const auto& counts = doc.at("counts");
  if (counts.at("jailbreak").get<std::size_t>() !=
          artifact.all.counts().jailbreak ||
      counts.at("benign").get<std::size_t>() != artifact.all.counts().benign) {
    throw std::runtime_error(path.string() +
                             ": recorded counts disagree with records");
  }
  return artifact;
}

}  // namespace jbshield
