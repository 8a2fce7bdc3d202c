#include "tokendrive/lang/grammar.hpp"

#include <algorithm>
#include <cmath>

namespace tokendrive::lang {

namespace {

// Keyword order is part of the file format: token ids are assigned in this
// order, followed by one block of ids per numeric field.
const std::vector<std::string>& keyword_list() {
  static const std::vector<std::string> kw = {
      "<PAD>",        "<OBS>",
      "<END>",        "STATUS",
      "STATUS_REPEAT", "TASK=DRIVE",
      "TASK=REQUERY", "TASK=CORRECT",
      "MODEL:",       "CONFLICT:",
      "PERCEPTION:",  "WAYPOINTS:",
      "CONTROL:",     "speed=",
      "throttle=",    "brake=",
      "pos=(",        "steer=",
      "hazard_dist=", "vehicles=[",
      "Δ=",      "steer",
      "long=none",    "long=throttle_vs_brake",
      "(",            ")",
      ",",            "]",
      "inf",          "light=RED",
      "light=GREEN",  "light=NONE",
  };
  return kw;
}

const std::array<Field, 8>& field_order() {
  static const std::array<Field, 8> order = {Field::wp,    Field::steer, Field::throttle,
                                             Field::brake, Field::speed, Field::pos,
                                             Field::hazard, Field::delta};
  return order;
}

// Keywords that may start a structured word, longest first so prefix matching
// is unambiguous (`steer=` before `steer`, `pos=(` before nothing else).
const std::vector<std::string>& prefix_keywords() {
  static const std::vector<std::string> list = [] {
    std::vector<std::string> v = keyword_list();
    std::sort(v.begin(), v.end(),
              [](const std::string& a, const std::string& b) { return a.size() > b.size(); });
    return v;
  }();
  return list;
}

bool numeric_char(char c) { return (c >= '0' && c <= '9') || c == '-' || c == '.'; }

}  // namespace

const FieldSpec& GrammarConfig::spec(Field f) const {
  switch (f) {
    case Field::wp: return wp;
    case Field::steer: return steer;
    case Field::throttle: return throttle;
    case Field::brake: return brake;
    case Field::speed: return speed;
    case Field::pos: return pos;
    case Field::hazard: return hazard;
    case Field::delta: return delta;
    case Field::none: break;
  }
  throw std::logic_error("no spec for Field::none");
}

Vocab::Vocab(const GrammarConfig& cfg) : cfg_(cfg) {
  for (const auto& kw : keyword_list()) {
    keyword_ids_[kw] = static_cast<int>(tokens_.size());
    tokens_.push_back({kw, Field::none, -1});
  }
  pad_ = keyword_ids_.at("<PAD>");
  obs_ = keyword_ids_.at("<OBS>");
  end_ = keyword_ids_.at("<END>");
  for (Field f : field_order()) {
    field_base_[static_cast<int>(f)] = static_cast<int>(tokens_.size());
    const FieldSpec& spec = cfg_.spec(f);
    for (int b = 0; b < spec.bins; ++b) tokens_.push_back({render(f, b), f, b});
  }
}

int Vocab::keyword(const std::string& text) const {
  const auto it = keyword_ids_.find(text);
  if (it == keyword_ids_.end()) throw TokenizeError("unknown keyword: " + text);
  return it->second;
}

std::optional<int> Vocab::try_keyword(const std::string& text) const {
  const auto it = keyword_ids_.find(text);
  if (it == keyword_ids_.end()) return std::nullopt;
  return it->second;
}

int Vocab::numeric_id(Field f, int bin) const {
  const FieldSpec& spec = cfg_.spec(f);
  if (bin < 0 || bin >= spec.bins) throw OutOfRange("bin out of range");
  return field_base_[static_cast<int>(f)] + bin;
}

double Vocab::bin_value(Field f, int bin) const {
  const FieldSpec& spec = cfg_.spec(f);
  return static_cast<double>(spec.min_centi + static_cast<long>(bin) * spec.step_centi) / 100.0;
}

Vocab::Quantized Vocab::quantize(double value, Field f) const {
  if (std::isnan(value)) throw OutOfRange("quantize: NaN value");
  const FieldSpec& spec = cfg_.spec(f);
  Quantized q;
  if (std::isinf(value)) {
    q.bin = value > 0 ? spec.bins - 1 : 0;
    q.clamped = true;
  } else {
    const double y = (value * 100.0 - spec.min_centi) / spec.step_centi;
    // nearest bin, ties toward -inf (with a 1e-9 guard against FP dust)
    double b = std::ceil(y - 0.5 - 1e-9);
    if (b < 0) {
      q.bin = 0;
      q.clamped = true;
    } else if (b > spec.bins - 1) {
      q.bin = spec.bins - 1;
      q.clamped = true;
    } else {
      q.bin = static_cast<int>(b);
    }
  }
  q.value = bin_value(f, q.bin);
  return q;
}

std::string Vocab::render(Field f, int bin) const {
  const FieldSpec& spec = cfg_.spec(f);
  const long centi = spec.min_centi + static_cast<long>(bin) * spec.step_centi;
  const long mag = std::labs(centi);
  std::string out;
  if (centi < 0) out += '-';
  out += std::to_string(mag / 100);
  out += '.';
  if (spec.decimals == 1) {
    out += static_cast<char>('0' + (mag % 100) / 10);
  } else {
    out += static_cast<char>('0' + (mag % 100) / 10);
    out += static_cast<char>('0' + mag % 10);
  }
  return out;
}

namespace {

// Strict decimal -> hundredths. Grammar numbers carry at most two decimals.
std::optional<long> parse_centi(const std::string& s) {
  if (s.empty()) return std::nullopt;
  size_t i = 0;
  bool neg = false;
  if (s[0] == '-') {
    neg = true;
    i = 1;
  }
  if (i >= s.size() || !std::isdigit(static_cast<unsigned char>(s[i]))) return std::nullopt;
  long ip = 0;
  while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) {
    ip = ip * 10 + (s[i] - '0');
    if (ip > 1000000) return std::nullopt;
    ++i;
  }
  long frac = 0;
  if (i < s.size()) {
    if (s[i] != '.') return std::nullopt;
    ++i;
    const size_t start = i;
    while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
    const size_t n = i - start;
    if (i != s.size() || n < 1 || n > 2) return std::nullopt;
    frac = (s[start] - '0') * 10;
    if (n == 2) frac += s[start + 1] - '0';
  } else if (i != s.size()) {
    return std::nullopt;
  }
  const long centi = ip * 100 + frac;
  return neg ? -centi : centi;
}

struct LexContext {
  enum class Section { other, waypoints, vehicles };
  Section section = Section::other;
  Field next_single = Field::none;
  std::vector<Field> tuple;  // pending fields after an opening paren
};

}  // namespace

std::vector<int> Vocab::encode(const std::string& text) const {
  std::vector<int> ids;
  LexContext ctx;

  auto on_keyword = [&](const std::string& kw) {
    if (kw == "speed=") ctx.next_single = Field::speed;
    else if (kw == "throttle=") ctx.next_single = Field::throttle;
    else if (kw == "brake=") ctx.next_single = Field::brake;
    else if (kw == "steer=") ctx.next_single = Field::steer;
    else if (kw == "Δ=") ctx.next_single = Field::delta;
    else if (kw == "hazard_dist=") ctx.next_single = Field::hazard;
    else if (kw == "pos=(") ctx.tuple = {Field::pos, Field::pos};
    else if (kw == "vehicles=[") ctx.section = LexContext::Section::vehicles;
    else if (kw == "WAYPOINTS:") ctx.section = LexContext::Section::waypoints;
    else if (kw == "]") ctx.section = LexContext::Section::other;
    else if (kw == "(") {
      if (ctx.section == LexContext::Section::waypoints) ctx.tuple = {Field::wp, Field::wp};
      else if (ctx.section == LexContext::Section::vehicles)
        ctx.tuple = {Field::wp, Field::wp, Field::speed};
      else
        throw TokenizeError("unexpected '('");
    } else if (kw == ")") {
      ctx.tuple.clear();
    } else if (kw == "PERCEPTION:" || kw == "CONTROL:" || kw == "STATUS" ||
               kw == "STATUS_REPEAT" || kw == "MODEL:" || kw == "CONFLICT:" ||
               kw == "TASK=DRIVE" || kw == "TASK=REQUERY" || kw == "TASK=CORRECT") {
      ctx.section = LexContext::Section::other;
    }
    ids.push_back(keyword_ids_.at(kw));
  };

  auto on_numeric = [&](const std::string& num) {
    Field f = Field::none;
    if (!ctx.tuple.empty()) {
      f = ctx.tuple.front();
      ctx.tuple.erase(ctx.tuple.begin());
    } else if (ctx.next_single != Field::none) {
      f = ctx.next_single;
      ctx.next_single = Field::none;
    } else {
      throw TokenizeError("number without field context: " + num);
    }
    const auto centi = parse_centi(num);
    if (!centi) throw TokenizeError("malformed number: " + num);
    const FieldSpec& spec = cfg_.spec(f);
    const long offset = *centi - spec.min_centi;
    if (offset < 0 || offset % spec.step_centi != 0 || offset / spec.step_centi >= spec.bins)
      throw TokenizeError("number off the field grid: " + num);
    ids.push_back(numeric_id(f, static_cast<int>(offset / spec.step_centi)));
  };

  size_t pos = 0;
  while (pos < text.size()) {
    size_t space = text.find(' ', pos);
    if (space == std::string::npos) space = text.size();
    const std::string word = text.substr(pos, space - pos);
    if (word.empty()) throw TokenizeError("empty word (double space?)");
    size_t i = 0;
    while (i < word.size()) {
      bool matched = false;
      for (const auto& kw : prefix_keywords()) {
        if (word.compare(i, kw.size(), kw) == 0) {
          on_keyword(kw);
          i += kw.size();
          matched = true;
          break;
        }
      }
      if (matched) continue;
      if (numeric_char(word[i])) {
        size_t j = i;
        while (j < word.size() && numeric_char(word[j])) ++j;
        on_numeric(word.substr(i, j - i));
        i = j;
        continue;
      }
      throw TokenizeError("cannot lex: " + word);
    }
    pos = space + 1;
  }
  return ids;
}

std::string Vocab::detokenize(const std::vector<int>& ids) const {
  std::string out;
  std::string prev;
  for (int id : ids) {
    const TokenInfo& tok = info(id);
    bool glue = out.empty();
    if (!glue && !prev.empty()) {
      const char last = prev.back();
      if (last == '=' || last == '(' || last == '[' || last == ',') glue = true;
    }
    if (!glue && (tok.text == "," || tok.text == ")" || tok.text == "]")) glue = true;
    if (!glue) out += ' ';
    out += tok.text;
    prev = tok.text;
  }
  return out;
}

void scan_sentence(const Vocab& vocab, DrivingSentence& s) {
  const int n = s.size();
  s.parameter_mask.assign(n, 0);
  s.spans.clear();
  SpanKind current = SpanKind::task;
  int span_begin = 0;

  auto flush = [&](int end, SpanKind next) {
    if (end > span_begin) s.spans.push_back({current, span_begin, end});
    current = next;
    span_begin = end;
  };

  for (int i = 0; i < n; ++i) {
    const TokenInfo& tok = vocab.info(s.tokens[i]);
    const bool in_prompt = i < s.prompt_len;
    SpanKind next = current;
    if (tok.text == "<OBS>") next = SpanKind::obs_placeholder;
    else if (tok.text == "STATUS" || tok.text == "STATUS_REPEAT") next = SpanKind::status;
    else if (tok.text == "TASK=DRIVE" || tok.text == "TASK=REQUERY" || tok.text == "TASK=CORRECT")
      next = SpanKind::task;
    else if (!in_prompt && tok.text == "PERCEPTION:") next = SpanKind::perception_desc;
    else if (!in_prompt && tok.text == "WAYPOINTS:") next = SpanKind::waypoints;
    else if (!in_prompt && tok.text == "CONTROL:") next = SpanKind::control;
    if (next != current) flush(i, next);
    if (!in_prompt && tok.numeric() &&
        (current == SpanKind::waypoints || current == SpanKind::control)) {
      s.parameter_mask[i] = 1;
    }
  }
  flush(n, current);
}

int parameter_mask_count(const DrivingSentence& s) {
  int n = 0;
  for (uint8_t m : s.parameter_mask) n += m != 0;
  return n;
}

}  // namespace tokendrive::lang
