#pragma once

namespace mcnet {

// Keeps freed graph buffers in the heap instead of returning them to the OS
// after every training step. No-op outside glibc.
void tune_allocator();

}  // namespace mcnet
