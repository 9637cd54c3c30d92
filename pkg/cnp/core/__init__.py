# Core analysis modules