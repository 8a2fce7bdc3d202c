#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "tokendrive/types.hpp"

namespace tokendrive::lang {

// Numeric field kinds of the driving language. Every number in a sentence
// belongs to exactly one field and is snapped to that field's grid, so each
// (field, bin) pair is a single vocabulary token and text <-> token id
// conversion is exact.
enum class Field : uint8_t {
  none = 0,
  wp,        // waypoint / relative-position coordinate, 0.1 m in [-25.6, 25.6]
  steer,     // 0.05 in [-1, 1]
  throttle,  // 0.05 in [0, 1]
  brake,     // 0.05 in [0, 1]
  speed,     // 0.1 m/s in [0, 25.5]
  pos,       // world coordinate, 0.8 m in [-102.4, 102.4]
  hazard,    // forward hazard distance, 0.2 m in [0, 51.0]
  delta,     // steer disagreement magnitude, 0.05 in [0, 2]
};
constexpr int kNumFields = 9;

struct FieldSpec {
  int min_centi = 0;   // grid start, hundredths of a unit
  int step_centi = 1;  // grid step, hundredths
  int bins = 0;
  int decimals = 1;    // rendered decimal places (grids make this exact)
};

struct GrammarConfig {
  FieldSpec wp{-2560, 10, 513, 1};
  FieldSpec steer{-100, 5, 41, 2};
  FieldSpec throttle{0, 5, 21, 2};
  FieldSpec brake{0, 5, 21, 2};
  FieldSpec speed{0, 10, 256, 2};
  FieldSpec pos{-10240, 80, 257, 1};
  FieldSpec hazard{0, 20, 256, 1};
  FieldSpec delta{0, 5, 41, 2};

  const FieldSpec& spec(Field f) const;
};

struct TokenInfo {
  std::string text;
  Field field = Field::none;  // none for keywords
  int bin = -1;
  bool numeric() const { return field != Field::none; }
};

struct OutOfRange : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TokenizeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

class Vocab {
 public:
  explicit Vocab(const GrammarConfig& cfg);

  int size() const { return static_cast<int>(tokens_.size()); }
  const TokenInfo& info(int id) const { return tokens_.at(id); }
  const GrammarConfig& config() const { return cfg_; }

  int pad() const { return pad_; }
  int obs() const { return obs_; }
  int end() const { return end_; }

  int keyword(const std::string& text) const;  // throws TokenizeError if unknown
  std::optional<int> try_keyword(const std::string& text) const;
  int numeric_id(Field f, int bin) const;
  double bin_value(Field f, int bin) const;

  // Nearest grid bin; ties round toward -inf. Out-of-grid values saturate and
  // set `clamped`.
  struct Quantized {
    double value = 0.0;
    int bin = 0;
    bool clamped = false;
  };
  Quantized quantize(double value, Field f) const;

  // Exact decimal rendering of a grid value ("3.20", "-25.6", ...).
  std::string render(Field f, int bin) const;

  // text <-> token ids; exact inverses on grammar-conformant text.
  std::vector<int> encode(const std::string& text) const;
  std::string detokenize(const std::vector<int>& ids) const;

 private:
  GrammarConfig cfg_;
  std::vector<TokenInfo> tokens_;
  std::unordered_map<std::string, int> keyword_ids_;
  std::array<int, kNumFields> field_base_{};
  int pad_ = 0, obs_ = 0, end_ = 0;
};

enum class SpanKind : uint8_t {
  obs_placeholder,
  status,
  task,
  perception_desc,
  waypoints,
  control,
};

struct Span {
  SpanKind kind;
  int begin = 0;  // token index, inclusive
  int end = 0;    // exclusive
};

// A tokenized driving-language sentence. Tokens [0, prompt_len) form the
// prompt; the remainder is the model completion / supervision.
struct DrivingSentence {
  std::vector<int> tokens;
  int prompt_len = 0;
  std::vector<Span> spans;
  std::vector<uint8_t> parameter_mask;  // true on numeric tokens in the
                                        // WAYPOINTS / CONTROL spans
  std::string text;
  bool truncated = false;  // generation hit the length cap

  int size() const { return static_cast<int>(tokens.size()); }
};

// Assigns spans and the parameter mask by scanning the token stream. Inside
// the prompt region WAYPOINTS:/CONTROL: belong to the task payload and never
// open spans of their own.
void scan_sentence(const Vocab& vocab, DrivingSentence& sentence);

// Number of true entries in the parameter mask (11 for a well-formed
// supervision sentence: 8 waypoint coordinates + 3 control values).
int parameter_mask_count(const DrivingSentence& sentence);

}  // namespace tokendrive::lang
