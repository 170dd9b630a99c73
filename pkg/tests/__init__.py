# Testing package
