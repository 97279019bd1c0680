"""Subcommand handlers"""
