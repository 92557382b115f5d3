#include <cstdio>
int main() { std::puts("chaosbench"); return 0; }
