#include <cstdio>
int main() { std::puts("logofuse: under construction"); return 1; }
