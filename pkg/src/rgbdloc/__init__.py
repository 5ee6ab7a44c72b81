"""Global 6-DoF localization of a depth camera in a sparse feature map."""
