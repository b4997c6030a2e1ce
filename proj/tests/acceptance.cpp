// Acceptance suite placeholder; filled in after fixture calibration.
int main() { return 1; }
