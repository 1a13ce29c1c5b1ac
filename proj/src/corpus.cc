#include "p2c/corpus.h"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>
#include <random>
#include <set>

#include "p2c/errors.h"
#include "p2c/utf8.h"

namespace p2c {
namespace {

TokenSeq read_token_field(const std::string& field) {
  if (field.find(' ') != std::string::npos) return split_whitespace(field);
  return split_utf8(field);
}

}  // namespace

PinyinMode parse_pinyin_mode(const std::string& name) {
  if (name == "complete") return PinyinMode::kComplete;
  if (name == "abbrev" || name == "abbreviated") return PinyinMode::kAbbreviated;
  throw ConfigError("unknown pinyin mode '" + name +
                    "' (expected complete|abbrev)");
}

TokenSeq tokenize_utterance(const std::string& utterance,
                            Granularity granularity) {
  if (granularity == Granularity::kWord) return split_whitespace(utterance);
  TokenSeq out;
  for (auto& c : split_utf8(utterance)) {
    if (c.size() == 1 && std::isspace(static_cast<unsigned char>(c[0]))) {
      continue;
    }
    out.push_back(std::move(c));
  }
  return out;
}

std::vector<Example> build_parallel(
    const std::vector<std::vector<std::string>>& documents,
    const CharPinyinDict& dict, const Lexicon& lexicon,
    const CorpusOptions& options) {
  if (options.context_window != 0 && options.context_window != 1) {
    throw ConfigError("context window must be 0 or 1");
  }
  std::vector<Example> out;
  for (std::size_t d = 0; d < documents.size(); ++d) {
    TokenSeq previous;
    for (std::size_t u = 0; u < documents[d].size(); ++u) {
      Example ex;
      ex.target = tokenize_utterance(documents[d][u], options.granularity);
      if (ex.target.empty()) {
        throw DomainError("document " + std::to_string(d) + ", utterance " +
                          std::to_string(u) + ": empty utterance");
      }
      std::string characters;
      for (const auto& t : ex.target) characters += t;
      try {
        ex.pinyin = annotate(characters, dict);
      } catch (const AnnotationError& e) {
        throw AnnotationError("document " + std::to_string(d) +
                                  ", utterance " + std::to_string(u) + ": " +
                                  e.what(),
                              e.missing());
      }
      if (options.mode == PinyinMode::kAbbreviated) {
        ex.pinyin = abbreviate(ex.pinyin, lexicon);
      }
      if (options.context_window == 1) ex.context = previous;
      previous = ex.target;
      out.push_back(std::move(ex));
    }
  }
  return out;
}

double relativity(std::span<const Example> examples) {
  if (examples.empty()) return 0.0;
  std::size_t related = 0;
  for (const auto& ex : examples) {
    std::set<std::string> ctx(ex.context.begin(), ex.context.end());
    if (std::any_of(ex.target.begin(), ex.target.end(),
                    [&](const std::string& t) { return ctx.count(t) > 0; })) {
      ++related;
    }
  }
  return static_cast<double>(related) / static_cast<double>(examples.size());
}

void write_corpus(std::ostream& out, std::span<const Example> examples) {
  for (const auto& ex : examples) {
    out << join(ex.context, " ") << '\t' << ex.pinyin.joined() << '\t'
        << join(ex.target, " ") << '\n';
  }
}

std::vector<Example> read_corpus(std::istream& in, const Lexicon* lexicon) {
  std::vector<Example> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::size_t t1 = line.find('\t');
    const std::size_t t2 =
        t1 == std::string::npos ? t1 : line.find('\t', t1 + 1);
    if (t2 == std::string::npos || line.find('\t', t2 + 1) != std::string::npos) {
      throw FormatError("corpus line " + std::to_string(line_no) +
                        ": expected context<TAB>pinyin<TAB>target");
    }
    Example ex;
    ex.context = read_token_field(line.substr(0, t1));
    ex.pinyin.tokens = split_whitespace(line.substr(t1 + 1, t2 - t1 - 1));
    ex.target = read_token_field(line.substr(t2 + 1));
    if (ex.pinyin.tokens.empty() || ex.target.empty()) {
      throw FormatError("corpus line " + std::to_string(line_no) +
                        ": empty pinyin or target");
    }
    ex.pinyin.form = PinyinForm::kComplete;
    if (lexicon != nullptr) {
      for (const auto& t : ex.pinyin.tokens) {
        if (!lexicon->contains(t)) ex.pinyin.form = PinyinForm::kAbbreviated;
      }
    }
    out.push_back(std::move(ex));
  }
  return out;
}

std::vector<Example> read_corpus_file(const std::filesystem::path& path,
                                      const Lexicon* lexicon) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open corpus " + path.string());
  return read_corpus(in, lexicon);
}

std::vector<std::vector<std::string>> read_documents(
    const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw FormatError("not a directory: " + dir.string());
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file()) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());

  std::vector<std::vector<std::string>> documents;
  for (const auto& file : files) {
    std::ifstream in(file);
    if (!in) throw FormatError("cannot open " + file.string());
    std::vector<std::string> doc;
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (split_whitespace(line).empty()) {
        if (!doc.empty()) documents.push_back(std::move(doc));
        doc.clear();
        continue;
      }
      doc.push_back(line);
    }
    if (!doc.empty()) documents.push_back(std::move(doc));
  }
  return documents;
}

Vocab::Vocab() {
  for (const auto& t : reserved_tokens()) push(t);
}

const std::vector<std::string>& Vocab::reserved_tokens() {
  static const std::vector<std::string> kReserved = {"<pad>", "<unk>", "<s>",
                                                     "</s>", "<bc>"};
  return kReserved;
}

Vocab Vocab::build(const std::map<std::string, std::size_t>& counts,
                   std::size_t min_count) {
  if (min_count < 1) throw DomainError("min_count must be >= 1");
  std::vector<std::pair<std::string, std::size_t>> ranked;
  for (const auto& [token, n] : counts) {
    if (n >= min_count) ranked.emplace_back(token, n);
  }
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) {
                     if (a.second != b.second) return a.second > b.second;
                     return a.first < b.first;
                   });
  Vocab v;
  for (const auto& [token, n] : ranked) {
    if (!v.contains(token)) v.push(token);
  }
  return v;
}

Vocab Vocab::from_tokens(const std::vector<std::string>& tokens) {
  const auto& reserved = reserved_tokens();
  if (tokens.size() < reserved.size() ||
      !std::equal(reserved.begin(), reserved.end(), tokens.begin())) {
    throw FormatError("vocabulary must start with the reserved tokens");
  }
  Vocab v;
  for (std::size_t i = reserved.size(); i < tokens.size(); ++i) {
    if (v.contains(tokens[i])) {
      throw FormatError("duplicate vocabulary token '" + tokens[i] + "'");
    }
    v.push(tokens[i]);
  }
  return v;
}

void Vocab::push(const std::string& token) {
  ids_.emplace(token, static_cast<int>(tokens_.size()));
  tokens_.push_back(token);
}

bool Vocab::contains(const std::string& token) const {
  return ids_.count(token) > 0;
}

int Vocab::id(const std::string& token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? kUnkId : it->second;
}

const std::string& Vocab::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw DomainError("token id " + std::to_string(id) + " out of range");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocab::encode(const TokenSeq& tokens) const {
  std::vector<int> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(id(t));
  return out;
}

TokenSeq Vocab::decode(std::span<const int> ids) const {
  TokenSeq out;
  out.reserve(ids.size());
  for (int i : ids) out.push_back(token(i));
  return out;
}

Vocabularies build_vocab(std::span<const Example> examples,
                         std::size_t min_count) {
  if (examples.empty()) throw DomainError("cannot build vocabulary: empty corpus");
  std::map<std::string, std::size_t> pinyin_counts;
  std::map<std::string, std::size_t> target_counts;
  for (const auto& ex : examples) {
    for (const auto& t : ex.pinyin.tokens) ++pinyin_counts[t];
    for (const auto& t : ex.target) ++target_counts[t];
    for (const auto& t : ex.context) ++target_counts[t];
  }
  return {Vocab::build(pinyin_counts, min_count),
          Vocab::build(target_counts, min_count)};
}

std::vector<std::size_t> shuffled_order(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::mt19937_64 rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

namespace {

IdMatrix pad_rows(const std::vector<std::vector<int>>& rows) {
  IdMatrix m;
  m.rows = rows.size();
  for (const auto& r : rows) m.cols = std::max(m.cols, r.size());
  m.ids.assign(m.rows * m.cols, kPadId);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    std::copy(rows[r].begin(), rows[r].end(), m.ids.begin() + r * m.cols);
  }
  return m;
}

}  // namespace

std::vector<Batch> batchify(std::span<const Example> examples,
                            const Vocabularies& vocabs,
                            std::size_t batch_size, std::uint64_t seed) {
  if (batch_size < 1) throw DomainError("batch_size must be >= 1");
  const auto order = shuffled_order(examples.size(), seed);
  std::vector<Batch> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(order.size(), start + batch_size);
    std::vector<std::vector<int>> ctx, pin, tgt;
    Batch b;
    for (std::size_t k = start; k < end; ++k) {
      const Example& ex = examples[order[k]];
      ctx.push_back(vocabs.target.encode(ex.context));
      pin.push_back(vocabs.pinyin.encode(ex.pinyin.tokens));
      tgt.push_back(vocabs.target.encode(ex.target));
      b.context_lengths.push_back(ctx.back().size());
      b.pinyin_lengths.push_back(pin.back().size());
      b.target_lengths.push_back(tgt.back().size());
    }
    b.context = pad_rows(ctx);
    b.pinyin = pad_rows(pin);
    b.target = pad_rows(tgt);
    batches.push_back(std::move(b));
  }
  return batches;
}

}  // namespace p2c
