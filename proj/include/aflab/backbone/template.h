#pragma once

#include <string>

namespace aflab::backbone {

// Position of the audio segment relative to the instruction in the user turn.
enum class Order { kAudioFirst, kInstructionFirst };

std::string ToString(Order order);
Order ParseOrder(const std::string& s);

}  // namespace aflab::backbone
