#pragma once

namespace geoinv {

// Thread cap for internal loops. Initialised from GEOINV_THREADS on first
// use; set_thread_count overrides it. Always >= 1.
int thread_count();
void set_thread_count(int n);

}  // namespace geoinv
