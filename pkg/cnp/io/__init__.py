# Input/Output modules