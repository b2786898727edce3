#include "aflab/backbone/tokenizer.h"

#include "aflab/errors.h"

namespace aflab::backbone {

namespace {
constexpr char kDefaultSymbols[] =
    " abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789.,:;'?!-";
}

Tokenizer::Tokenizer() : Tokenizer(kDefaultSymbols) {}

Tokenizer::Tokenizer(std::string symbols) : symbols_(std::move(symbols)) {
  for (int& v : lookup_) v = -1;
  for (std::size_t i = 0; i < symbols_.size(); ++i) {
    const auto c = static_cast<unsigned char>(symbols_[i]);
    if (lookup_[c] != -1) throw InputError(std::string("tokenizer: duplicate symbol '") + symbols_[i] + "'");
    lookup_[c] = kNumSpecial + static_cast<int>(i);
  }
}

int Tokenizer::Id(char c) const {
  const int id = lookup_[static_cast<unsigned char>(c)];
  if (id < 0) throw InputError(std::string("tokenizer: unknown character '") + c + "'");
  return id;
}

std::vector<int> Tokenizer::Encode(std::string_view text) const {
  std::vector<int> ids;
  ids.reserve(text.size());
  for (char c : text) ids.push_back(Id(c));
  return ids;
}

std::string Tokenizer::Decode(std::span<const int> ids) const {
  std::string out;
  for (int id : ids)
    if (IsText(id)) out.push_back(symbols_[id - kNumSpecial]);
  return out;
}

}  // namespace aflab::backbone
