#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace aflab::backbone {

// Character-level vocabulary shared by the LM and the CTC head. Id 0 doubles
// as the CTC blank and LM padding and never appears in text.
class Tokenizer {
 public:
  static constexpr int kBlank = 0;
  static constexpr int kUser = 1;      // <u> opens the user turn
  static constexpr int kResponse = 2;  // <r> opens the response
  static constexpr int kEnd = 3;       // <e> closes the response
  static constexpr int kNumSpecial = 4;

  // Default printable symbol table.
  Tokenizer();
  explicit Tokenizer(std::string symbols);

  int vocab_size() const { return kNumSpecial + static_cast<int>(symbols_.size()); }
  const std::string& symbols() const { return symbols_; }

  // Throws InputError on characters outside the table.
  std::vector<int> Encode(std::string_view text) const;
  int Id(char c) const;
  // Special tokens are dropped; decoding stops at nothing.
  std::string Decode(std::span<const int> ids) const;
  bool IsText(int id) const { return id >= kNumSpecial && id < vocab_size(); }

 private:
  std::string symbols_;
  int lookup_[256];
};

}  // namespace aflab::backbone
