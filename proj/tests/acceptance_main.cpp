// Standalone acceptance runner; exit status 0 iff every criterion passes.

#include <hjens/acceptance.hpp>

#include <iostream>

int main() { return hjens::run_acceptance(std::cout) ? 0 : 1; }
