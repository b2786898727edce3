#include "aflab/backbone/template.h"

#include "aflab/errors.h"

namespace aflab::backbone {

std::string ToString(Order order) {
  return order == Order::kAudioFirst ? "audio_first" : "instruction_first";
}

Order ParseOrder(const std::string& s) {
  if (s == "audio_first") return Order::kAudioFirst;
  if (s == "instruction_first") return Order::kInstructionFirst;
  throw InputError("unknown order '" + s + "' (expected audio_first or instruction_first)");
}

}  // namespace aflab::backbone
