#pragma once

namespace idip {

/// Keeps large activation buffers on the heap between iterations instead of
/// returning them to the OS. Call once at program start; no-op off glibc.
void tune_allocator();

}  // namespace idip
