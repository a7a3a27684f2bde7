#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace jbshield {

enum class Label : std::uint8_t { Benign = 0, Jailbreak = 1 };

const char* to_string(Label label);

/// Case-insensitive label parsing: {"jailbreak","1","true"} and
/// {"benign","0","false"}. Anything else throws.
Label label_from_token(std::string_view token);

/// One labeled text sample with source attribution.
struct PromptRecord {
  std::string id;
  std::string text;
  Label label = Label::Benign;
  std::string source;
};

struct LabelCounts {
  std::size_t jailbreak = 0;
  std::size_t benign = 0;

  std::size_t total() const { return jailbreak + benign; }
  std::size_t of(Label label) const {
    return label == Label::Jailbreak ? jailbreak : benign;
  }
  bool operator==(const LabelCounts&) const = default;
};

/// Ordered sequence of records plus a per-label tally kept in sync by the
/// mutators. Record ids are unique within a corpus.
class Corpus {
 public:
  Corpus() = default;
  explicit Corpus(std::vector<PromptRecord> records);

  const std::vector<PromptRecord>& records() const { return records_; }
  const LabelCounts& counts() const { return counts_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }

  /// Validates the record (non-empty text after trimming, unique id) and
  /// appends it.
  void add(PromptRecord record);

  /// Fresh recount of the label tally, for invariant checks.
  LabelCounts tally() const;

 private:
  std::vector<PromptRecord> records_;
  LabelCounts counts_;
  std::unordered_map<std::string, std::size_t> index_by_id_;
};

enum class IngestFormat { Jsonl, Csv };

/// Load a labeled prompt file. JSONL rows carry string fields "text",
/// "label", "source" and an optional "id" (assigned "<stem>:<ordinal>" when
/// absent). CSV needs a header naming columns text,label,source (id
/// optional). Malformed rows fail with the offending line number.
Corpus ingest(const std::filesystem::path& path, IngestFormat format);

/// Format inferred from the extension (.jsonl/.csv).
Corpus ingest(const std::filesystem::path& path);

/// Concatenate corpora in order; colliding record ids are an error.
Corpus merge(std::span<const Corpus> parts);

/// Keep exactly one record per normalized text (first occurrence wins,
/// order otherwise preserved). Duplicates that disagree on the label are an
/// error listing the texts: silently picking a side would corrupt ground
/// truth.
Corpus dedupe(const Corpus& corpus);

struct SplitSpec {
  double train_fraction = 0.8;
  std::uint64_t seed = 0;
};

struct SplitResult {
  Corpus train;
  Corpus validation;
};

/// Stratified split. Per label, train receives round-half-up
/// (train_fraction * class count) records and validation the remainder.
/// Membership is a pure function of (seed, record ids): records are ordered
/// by id per class, shuffled by a seeded stream, and the prefix goes to
/// train. Output corpora preserve the input order.
SplitResult stratified_split(const Corpus& corpus, const SplitSpec& spec);

struct FoldAssignment {
  int k = 0;
  std::unordered_map<std::string, int> fold_of;  // record id -> fold in [0,k)

  bool operator==(const FoldAssignment&) const = default;
};

/// Stratified k-fold assignment: per label, ids are ordered, shuffled by the
/// seeded stream and dealt round-robin, so per-fold class counts differ by
/// at most one. Each class must have at least k records.
FoldAssignment make_folds(std::span<const std::pair<std::string, Label>> items,
                          int k, std::uint64_t seed);
FoldAssignment make_folds(const Corpus& corpus, int k, std::uint64_t seed);

/// Content hash over (normalized text, label) in corpus order; identifies
/// the evaluation data in reports and model metadata.
std::uint64_t corpus_hash(const Corpus& corpus);

/// On-disk corpus artifact: the corpus plus, once the split stage has run,
/// the train/validation membership.
struct CorpusArtifact {
  Corpus all;
  std::optional<SplitResult> split;
  double train_fraction = 0.0;  // meaningful only when split is present
  std::uint64_t split_seed = 0;
};

void save_corpus_artifact(const std::filesystem::path& path,
                          const CorpusArtifact& artifact);
CorpusArtifact load_corpus_artifact(const std::filesystem::path& path);

}  // namespace jbshield
