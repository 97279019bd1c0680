"""Numerical services: image input, moments, inference, sampling and analysis"""
