# Configuration module for the convolutional neural pyramid toolkit
