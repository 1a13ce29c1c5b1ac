#include "p2c/pinyin.h"

#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>
#include <istream>
#include <sstream>

#include "p2c/errors.h"
#include "p2c/utf8.h"

namespace p2c {
namespace {

constexpr std::array<std::string_view, 23> kInitials = {
    "zh", "ch", "sh", "b", "p", "m", "f", "d", "t", "n", "l", "g",
    "k",  "h",  "j",  "q", "x", "r", "z", "c", "s", "y", "w"};

bool is_lower_ascii(std::string_view s) {
  return std::all_of(s.begin(), s.end(),
                     [](char c) { return c >= 'a' && c <= 'z'; });
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = line.find('\t', start);
    fields.push_back(line.substr(start, tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return fields;
}

std::string strip_cr(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

// Longest legal syllable starting at `pos`, or 0.
std::size_t longest_syllable(std::string_view raw, std::size_t pos,
                             const Lexicon& lexicon) {
  const std::size_t max_len =
      std::min(lexicon.max_syllable_length(), raw.size() - pos);
  for (std::size_t len = max_len; len > 0; --len) {
    if (lexicon.contains(raw.substr(pos, len))) return len;
  }
  return 0;
}

void require_letters(std::string_view raw) {
  if (raw.empty()) throw DomainError("empty pinyin input");
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (raw[i] < 'a' || raw[i] > 'z') throw UnsegmentableError(std::string(raw), i);
  }
}

}  // namespace

const char* pinyin_form_name(PinyinForm form) {
  switch (form) {
    case PinyinForm::kComplete:
      return "complete";
    case PinyinForm::kAbbreviated:
      return "abbreviated";
    case PinyinForm::kPrefix:
      return "prefix";
  }
  return "unknown";
}

std::size_t PinyinSequence::letter_count() const {
  std::size_t n = 0;
  for (const auto& t : tokens) n += t.size();
  return n;
}

std::string PinyinSequence::joined() const { return join(tokens, " "); }

Lexicon Lexicon::parse(std::istream& in) {
  Lexicon lex;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(line);
    if (line.empty() || line[0] == '#') continue;
    const auto fields = split_tabs(line);
    if (fields.size() > 2) {
      throw FormatError("lexicon line " + std::to_string(line_no) +
                        ": expected syllable<TAB>initial");
    }
    try {
      lex.add(fields[0], fields.size() == 2 ? fields[1] : std::string());
    } catch (const FormatError& e) {
      throw FormatError("lexicon line " + std::to_string(line_no) + ": " +
                        e.what());
    }
  }
  return lex;
}

Lexicon Lexicon::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open lexicon " + path.string());
  return parse(in);
}

Lexicon Lexicon::from_syllables(const std::vector<std::string>& syllables) {
  Lexicon lex;
  for (const auto& s : syllables) {
    std::string initial;
    for (std::string_view cand : kInitials) {
      if (cand.size() < s.size() && s.compare(0, cand.size(), cand) == 0) {
        initial = std::string(cand);
        break;
      }
    }
    lex.add(s, initial);
  }
  return lex;
}

void Lexicon::add(const std::string& syllable, const std::string& initial) {
  if (syllable.empty() || !is_lower_ascii(syllable)) {
    throw FormatError("syllable must match [a-z]+: '" + syllable + "'");
  }
  if (!is_lower_ascii(initial) || syllable.compare(0, initial.size(), initial) != 0) {
    throw FormatError("initial '" + initial + "' is not a prefix of '" +
                      syllable + "'");
  }
  initials_[syllable] = initial;
  abbreviations_.insert(initial.empty() ? syllable.substr(0, 1) : initial);
  for (std::size_t len = 1; len < syllable.size(); ++len) {
    prefixes_.insert(syllable.substr(0, len));
  }
  max_length_ = std::max(max_length_, syllable.size());
}

bool Lexicon::contains(std::string_view syllable) const {
  return initials_.find(syllable) != initials_.end();
}

const std::string& Lexicon::initial(std::string_view syllable) const {
  auto it = initials_.find(syllable);
  if (it == initials_.end()) {
    throw DomainError("unknown syllable '" + std::string(syllable) + "'");
  }
  return it->second;
}

std::string Lexicon::abbreviation(std::string_view syllable) const {
  const std::string& init = initial(syllable);
  return init.empty() ? std::string(syllable.substr(0, 1)) : init;
}

bool Lexicon::is_abbreviation(std::string_view token) const {
  return abbreviations_.find(token) != abbreviations_.end();
}

bool Lexicon::is_proper_prefix(std::string_view letters) const {
  return prefixes_.find(letters) != prefixes_.end();
}

PinyinSequence segment(std::string_view raw, const Lexicon& lexicon) {
  require_letters(raw);
  PinyinSequence out;
  std::size_t pos = 0;
  while (pos < raw.size()) {
    const std::size_t len = longest_syllable(raw, pos, lexicon);
    if (len == 0) throw UnsegmentableError(std::string(raw), pos);
    out.tokens.emplace_back(raw.substr(pos, len));
    pos += len;
  }
  out.form = PinyinForm::kComplete;
  return out;
}

PinyinSequence segment_input(std::string_view raw, const Lexicon& lexicon) {
  require_letters(raw);
  PinyinSequence out;
  bool abbreviated = false;
  bool partial = false;
  std::size_t pos = 0;
  while (pos < raw.size()) {
    const std::string_view rest = raw.substr(pos);
    const std::size_t len = longest_syllable(raw, pos, lexicon);
    // A trailing partial syllable beats a shorter full-syllable match:
    // "tia" is on its way to "tian", not "ti a".
    if (!lexicon.contains(rest) && lexicon.is_proper_prefix(rest) &&
        rest.size() > len && (len > 0 || !lexicon.is_abbreviation(rest))) {
      out.tokens.emplace_back(rest);
      partial = true;
      break;
    }
    if (len > 0) {
      out.tokens.emplace_back(raw.substr(pos, len));
      pos += len;
      continue;
    }
    std::size_t abbrev_len = 0;
    for (std::size_t l = std::min<std::size_t>(2, rest.size()); l > 0; --l) {
      if (lexicon.is_abbreviation(rest.substr(0, l))) {
        abbrev_len = l;
        break;
      }
    }
    if (abbrev_len == 0) throw UnsegmentableError(std::string(raw), pos);
    out.tokens.emplace_back(rest.substr(0, abbrev_len));
    abbreviated = true;
    pos += abbrev_len;
  }
  out.form = partial       ? PinyinForm::kPrefix
             : abbreviated ? PinyinForm::kAbbreviated
                           : PinyinForm::kComplete;
  return out;
}

PinyinSequence segment_typed(std::string_view raw, const Lexicon& lexicon) {
  PinyinSequence out;
  bool abbreviated = false;
  bool partial = false;
  std::size_t pos = 0;
  while (pos < raw.size()) {
    if (raw[pos] == ' ' || raw[pos] == '\'') {
      ++pos;
      continue;
    }
    std::size_t end = pos;
    while (end < raw.size() && raw[end] != ' ' && raw[end] != '\'') ++end;
    std::string piece(raw.substr(pos, end - pos));
    for (char& c : piece) {
      c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    PinyinSequence part;
    try {
      part = segment_input(piece, lexicon);
    } catch (const UnsegmentableError& e) {
      throw UnsegmentableError(std::string(raw), pos + e.offset());
    }
    out.tokens.insert(out.tokens.end(), part.tokens.begin(), part.tokens.end());
    abbreviated |= part.form == PinyinForm::kAbbreviated;
    partial |= part.form == PinyinForm::kPrefix;
    pos = end;
  }
  if (out.tokens.empty()) throw DomainError("empty pinyin input");
  out.form = partial       ? PinyinForm::kPrefix
             : abbreviated ? PinyinForm::kAbbreviated
                           : PinyinForm::kComplete;
  return out;
}

PinyinSequence abbreviate(const PinyinSequence& pinyin,
                          const Lexicon& lexicon) {
  if (pinyin.form != PinyinForm::kComplete) {
    throw DomainError(std::string("abbreviate needs complete pinyin, got ") +
                      pinyin_form_name(pinyin.form));
  }
  PinyinSequence out;
  out.form = PinyinForm::kAbbreviated;
  out.tokens.reserve(pinyin.tokens.size());
  for (const auto& syllable : pinyin.tokens) {
    out.tokens.push_back(lexicon.abbreviation(syllable));
  }
  return out;
}

bool match_abbrev(std::string_view syllable, std::string_view abbrev,
                  const Lexicon& lexicon) {
  if (abbrev.empty()) throw DomainError("empty abbreviation");
  if (lexicon.contains(syllable) && lexicon.abbreviation(syllable) == abbrev) {
    return true;
  }
  return syllable.substr(0, abbrev.size()) == abbrev;
}

CharPinyinDict CharPinyinDict::parse(std::istream& in) {
  CharPinyinDict dict;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(line);
    if (line.empty() || line[0] == '#') continue;
    const auto fields = split_tabs(line);
    if (fields.size() != 3) {
      throw FormatError("dictionary line " + std::to_string(line_no) +
                        ": expected char<TAB>syllable<TAB>weight");
    }
    double weight = 0;
    std::istringstream ws(fields[2]);
    if (!(ws >> weight)) {
      throw FormatError("dictionary line " + std::to_string(line_no) +
                        ": bad weight '" + fields[2] + "'");
    }
    try {
      dict.add(fields[0], fields[1], weight);
    } catch (const FormatError& e) {
      throw FormatError("dictionary line " + std::to_string(line_no) + ": " +
                        e.what());
    }
  }
  return dict;
}

CharPinyinDict CharPinyinDict::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open dictionary " + path.string());
  return parse(in);
}

void CharPinyinDict::add(const std::string& character,
                         const std::string& syllable, double weight) {
  if (split_utf8(character).size() != 1) {
    throw FormatError("dictionary key must be one character: '" + character +
                      "'");
  }
  if (syllable.empty() || !is_lower_ascii(syllable)) {
    throw FormatError("bad syllable '" + syllable + "'");
  }
  if (!(weight > 0)) throw FormatError("weights must be positive");
  readings_[character].push_back({syllable, weight});
}

bool CharPinyinDict::contains(std::string_view character) const {
  return readings_.find(character) != readings_.end();
}

const std::vector<Reading>& CharPinyinDict::readings(
    std::string_view character) const {
  auto it = readings_.find(character);
  if (it == readings_.end()) {
    throw AnnotationError("no reading for '" + std::string(character) + "'",
                          std::string(character));
  }
  return it->second;
}

const std::string& CharPinyinDict::best_reading(
    std::string_view character) const {
  const auto& rs = readings(character);
  const Reading* best = &rs.front();
  for (const Reading& r : rs) {
    if (r.weight > best->weight ||
        (r.weight == best->weight && r.syllable < best->syllable)) {
      best = &r;
    }
  }
  return best->syllable;
}

PinyinSequence annotate(std::string_view chars, const CharPinyinDict& dict) {
  const auto characters = split_utf8(chars);
  std::string missing;
  for (const auto& c : characters) {
    if (!dict.contains(c) && missing.find(c) == std::string::npos) missing += c;
  }
  if (!missing.empty()) {
    throw AnnotationError("no pinyin reading for: " + missing, missing);
  }
  PinyinSequence out;
  out.form = PinyinForm::kComplete;
  out.tokens.reserve(characters.size());
  for (const auto& c : characters) out.tokens.push_back(dict.best_reading(c));
  return out;
}

}  // namespace p2c
