#ifndef P2C_PINYIN_H_
#define P2C_PINYIN_H_

#include <filesystem>
#include <iosfwd>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace p2c {

enum class PinyinForm {
  kComplete,     // every token is a legal syllable
  kAbbreviated,  // contains initial-only tokens ("t q" for "tian qi")
  kPrefix,       // ends in a partially typed syllable
};

const char* pinyin_form_name(PinyinForm form);

struct PinyinSequence {
  std::vector<std::string> tokens;
  PinyinForm form = PinyinForm::kComplete;

  // Number of letters a typist enters for this sequence.
  std::size_t letter_count() const;
  // Tokens joined by single spaces.
  std::string joined() const;

  friend bool operator==(const PinyinSequence&,
                         const PinyinSequence&) = default;
};

// The set of legal syllables with their consonant initials.
//
// Zero-initial syllables (a, ai, en, ou, ...) map to the empty initial and
// abbreviate to their first letter.
class Lexicon {
 public:
  Lexicon() = default;

  // Records are `syllable<TAB>initial`; the initial column may be empty.
  static Lexicon parse(std::istream& in);
  static Lexicon load(const std::filesystem::path& path);
  // Initials derived from the standard initial inventory.
  static Lexicon from_syllables(const std::vector<std::string>& syllables);

  void add(const std::string& syllable, const std::string& initial);

  bool contains(std::string_view syllable) const;
  const std::string& initial(std::string_view syllable) const;
  // The initial, or the first letter when the initial is empty.
  std::string abbreviation(std::string_view syllable) const;
  // True if `token` is the abbreviation of at least one syllable.
  bool is_abbreviation(std::string_view token) const;
  // True if `letters` is a proper prefix of at least one syllable.
  bool is_proper_prefix(std::string_view letters) const;

  std::size_t size() const { return initials_.size(); }
  std::size_t max_syllable_length() const { return max_length_; }
  const std::map<std::string, std::string, std::less<>>& entries() const {
    return initials_;
  }

 private:
  std::map<std::string, std::string, std::less<>> initials_;
  std::set<std::string, std::less<>> abbreviations_;
  std::set<std::string, std::less<>> prefixes_;
  std::size_t max_length_ = 0;
};

// Greedy longest-match segmentation of raw letters into legal syllables.
// Throws UnsegmentableError at the first position no syllable matches.
PinyinSequence segment(std::string_view raw, const Lexicon& lexicon);

// Segmentation of live keyboard input: accepts initial-only tokens and a
// trailing partial syllable in addition to full syllables.
PinyinSequence segment_input(std::string_view raw, const Lexicon& lexicon);

// Keyboard input with optional boundary marks: spaces and apostrophes
// split the letters into pieces that are segmented independently by
// segment_input. Letters are lower-cased. Error offsets index `raw`.
PinyinSequence segment_typed(std::string_view raw, const Lexicon& lexicon);

// Replaces each syllable by its abbreviation. Requires complete form.
PinyinSequence abbreviate(const PinyinSequence& pinyin,
                          const Lexicon& lexicon);

// Whether `abbrev` (an initial or a prefix) may stand for `syllable`.
bool match_abbrev(std::string_view syllable, std::string_view abbrev,
                  const Lexicon& lexicon);

struct Reading {
  std::string syllable;
  double weight = 0;
};

// Character -> weighted pinyin readings, used to annotate raw text.
class CharPinyinDict {
 public:
  // Records are `char<TAB>syllable<TAB>weight`.
  static CharPinyinDict parse(std::istream& in);
  static CharPinyinDict load(const std::filesystem::path& path);

  void add(const std::string& character, const std::string& syllable,
           double weight);

  bool contains(std::string_view character) const;
  const std::vector<Reading>& readings(std::string_view character) const;
  // Highest weight; ties go to the lexicographically smallest syllable.
  const std::string& best_reading(std::string_view character) const;

  std::size_t size() const { return readings_.size(); }

 private:
  std::map<std::string, std::vector<Reading>, std::less<>> readings_;
};

// One syllable per character of `chars` (UTF-8).
PinyinSequence annotate(std::string_view chars, const CharPinyinDict& dict);

}  // namespace p2c

#endif  // P2C_PINYIN_H_
